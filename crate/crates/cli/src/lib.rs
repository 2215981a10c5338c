//! Command-line front end: coefficient tables, scenario reports, resonance
//! scans and the oracle self-check.

pub mod config;
pub mod export;

use std::fs;
use std::path::{Path, PathBuf};

use cavity_gme::bogoliubov::{compile_trajectory, oracle_check, switch_map, BogoMap, ORACLE_TOL};
use cavity_gme::oracle::oracle_first_order;
use cavity_gme::scenarios::{resonance_scan, run_scenario_a, run_scenario_b, ScanResult, ScenarioOptions, ScenarioResult};
use cavity_gme::{FieldKind, C64};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

pub use config::{parse_pair, Overrides, RunConfig};
use export::{coeff_csv, csv_float, scan_csv, scan_svg, CoeffRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Core(#[from] cavity_gme::Error),
    #[error("{count} oracle disagreement(s); worst |diff| = {worst:.3e} at ({m}, {n})")]
    Oracle { count: usize, worst: f64, m: i32, n: i32 },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Core(cavity_gme::Error::RegimeGuard { .. }) => 2,
            Self::Core(cavity_gme::Error::OracleDisagreement { .. }) | Self::Oracle { .. } => 3,
            _ => 1,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cavity-gme", version, about = "Multipartite entanglement of cavity modes under non-uniform motion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelChoice {
    Alpha,
    Beta,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// First-order kernels per unit h as CSV (m,n,re,im,abs)
    Coeffs {
        #[command(flatten)]
        common: Common,
        /// scalar block to print; Dirac fields always print A
        #[arg(long, value_enum, default_value = "beta")]
        kernel: KernelChoice,
        /// compare each single-switch entry with the quadrature oracle
        #[arg(long)]
        oracle: bool,
    },
    /// Three-cavity scenario; writes a JSON report
    ScenarioA {
        #[command(flatten)]
        common: Common,
    },
    /// Single-cavity vacuum scenario; writes a JSON report
    ScenarioB {
        #[command(flatten)]
        common: Common,
    },
    /// |beta1| over the block parameter u as CSV (+ optional SVG)
    ResonanceScan {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Closed-form kernels against the quadrature oracle
    OracleCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        label_max: i32,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// JSON run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// output file (default: stdout)
    #[arg(long, short)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub field: Option<FieldArg>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub n_max: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    /// mode pair m,n (repeatable)
    #[arg(long = "pair", value_parser = parse_pair, allow_hyphen_values = true)]
    pub pairs: Vec<(i32, i32)>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "allow-large-Nh")]
    pub allow_large_nh: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FieldArg {
    Scalar,
    Dirac,
}

impl Common {
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_json(&read(p)?)?,
            None => RunConfig::default(),
        };
        if let Some(f) = self.field {
            cfg.cavity.field = match f {
                FieldArg::Scalar => FieldKind::ScalarMassless,
                FieldArg::Dirac => FieldKind::DiracMassless,
            };
        }
        cfg.apply(&Overrides {
            h: self.h,
            n_max: self.n_max,
            blocks: self.blocks,
            pairs: self.pairs.clone(),
            seed: self.seed,
            allow_large_nh: self.allow_large_nh,
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn read(p: &Path) -> Result<String, CliError> {
    fs::read_to_string(p).map_err(|source| CliError::Io { path: p.to_path_buf(), source })
}

/// Writes to `path` or, if none, returns the text for stdout.
fn emit(path: Option<&Path>, text: String) -> Result<Option<String>, CliError> {
    match path {
        Some(p) => fs::write(p, text).map(|_| None).map_err(|source| CliError::Io { path: p.to_path_buf(), source }),
        None => Ok(Some(text)),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub version: String,
    pub config: RunConfig,
    pub result: ScenarioResult,
}

impl Report {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> Result<Self, CliError> {
        serde_json::from_str(s).map_err(|e| CliError::Config(format!("report: {e}")))
    }
}

fn default_modes(field: FieldKind, b: bool) -> Vec<i32> {
    match (field, b) {
        (FieldKind::ScalarMassless, false) => vec![1, 2],
        (FieldKind::DiracMassless, false) => vec![1, -2],
        (FieldKind::ScalarMassless, true) => vec![1, 2, 3],
        (FieldKind::DiracMassless, true) => vec![1, 3, -2],
    }
}

pub fn scenario(cfg: &RunConfig, b: bool) -> Result<Report, CliError> {
    let cav = cfg.cavity()?;
    let traj = cfg.trajectory()?;
    let h = cfg.eval_h(&traj);
    let modes = cfg.scenario.as_ref().map(|s| s.modes.clone()).unwrap_or_else(|| default_modes(cav.field, b));
    let sign = cfg.scenario.as_ref().map_or(1, |s| s.sign);
    let opts = ScenarioOptions { allow_large_nh: cfg.allow_large_nh, fermion_order: cfg.fermion_order() };
    let result = match (b, modes.as_slice()) {
        (false, &[k, kp]) => run_scenario_a(&cav, &traj, h, (k, kp), sign, &opts)?,
        (true, &[k, kp, kpp]) => run_scenario_b(&cav, &traj, h, (k, kp, kpp), &opts)?,
        _ => {
            return Err(CliError::Config(format!(
                "scenario {} needs {} modes, got {modes:?}",
                if b { "B" } else { "A" },
                if b { 3 } else { 2 }
            )))
        }
    };
    Ok(Report {
        command: if b { "scenario-b" } else { "scenario-a" }.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        result,
    })
}

pub fn scan(cfg: &RunConfig) -> Result<ScanResult, CliError> {
    let s = &cfg.scan;
    let opts = ScenarioOptions { allow_large_nh: cfg.allow_large_nh, ..Default::default() };
    Ok(resonance_scan(&cfg.cavity()?, s.h, s.blocks, &s.pairs, (s.u_min, s.u_max), s.u_steps, &opts)?)
}

/// Kernel table. Without a trajectory in the config the single switch-in
/// map is used, which is also what `--oracle` compares.
/// Empty `pairs` means every (m, n) of the basis.
pub fn coeffs(cfg: &RunConfig, pairs: &[(i32, i32)], kernel: KernelChoice, with_oracle: bool) -> Result<Vec<CoeffRow>, CliError> {
    let cav = cfg.cavity()?;
    let single = cfg.trajectory.is_none();
    if with_oracle && !single {
        return Err(CliError::Usage("--oracle compares single-switch kernels; drop the trajectory".into()));
    }
    let map = if single {
        switch_map(&cav, cfg.h.filter(|h| *h > 0.0).unwrap_or(0.01))?
    } else {
        compile_trajectory(&cav, &cfg.trajectory()?, false)?
    };
    let labels = map.basis().labels.clone();
    let pairs: Vec<(i32, i32)> = if pairs.is_empty() {
        labels.iter().flat_map(|&m| labels.iter().map(move |&n| (m, n))).collect()
    } else {
        pairs.to_vec()
    };
    let mat = match (&map, kernel) {
        (BogoMap::Boson(b), KernelChoice::Alpha) => &b.alpha1,
        _ => map.kernel(),
    };
    let mut rows = Vec::with_capacity(pairs.len());
    for (m, n) in pairs {
        let (i, j) = (map.basis().index(m)?, map.basis().index(n)?);
        let value: C64 = mat[(i, j)];
        let oracle = if with_oracle {
            let est = oracle_first_order(cav.field, m, n)?;
            let o = match (cav.field, kernel) {
                (FieldKind::ScalarMassless, KernelChoice::Beta) => est.beta1.map_or(f64::NAN, |b| b.re),
                _ => est.alpha1.re,
            };
            Some((o, (value.re - o).abs()))
        } else {
            None
        };
        rows.push(CoeffRow { m, n, value, oracle });
    }
    Ok(rows)
}

fn oracle_failure(rows: &[CoeffRow]) -> Option<CliError> {
    let bad: Vec<&CoeffRow> = rows.iter().filter(|r| r.oracle.is_some_and(|(_, d)| !(d <= ORACLE_TOL))).collect();
    let w = bad.iter().max_by(|a, b| a.oracle.unwrap().1.total_cmp(&b.oracle.unwrap().1))?;
    Some(CliError::Oracle { count: bad.len(), worst: w.oracle.unwrap().1, m: w.m, n: w.n })
}

/// Runs one command. Returns text destined for stdout, if any.
pub fn run(cli: Cli) -> Result<Option<String>, CliError> {
    match cli.command {
        Command::Coeffs { common, kernel, oracle } => {
            let cfg = common.load()?;
            let rows = coeffs(&cfg, &common.pairs, kernel, oracle)?;
            let out = emit(common.out.as_deref().or(cfg.output.csv.as_deref()), coeff_csv(&rows))?;
            match oracle_failure(&rows) {
                Some(e) => {
                    if let Some(text) = out {
                        print!("{text}");
                    }
                    Err(e)
                }
                None => Ok(out),
            }
        }
        Command::ScenarioA { common } => {
            let cfg = common.load()?;
            let r = scenario(&cfg, false)?;
            emit(common.out.as_deref().or(cfg.output.json.as_deref()), r.to_json())
        }
        Command::ScenarioB { common } => {
            let cfg = common.load()?;
            let r = scenario(&cfg, true)?;
            emit(common.out.as_deref().or(cfg.output.json.as_deref()), r.to_json())
        }
        Command::ResonanceScan { common, svg } => {
            let cfg = common.load()?;
            let s = scan(&cfg)?;
            if let Some(p) = svg.as_deref().or(cfg.output.svg.as_deref()) {
                emit(Some(p), scan_svg(&s))?;
            }
            emit(common.out.as_deref().or(cfg.output.csv.as_deref()), scan_csv(&s))
        }
        Command::OracleCheck { common, label_max } => {
            let cfg = common.load()?;
            if label_max < 1 {
                return Err(CliError::Usage(format!("--label-max must be positive, got {label_max}")));
            }
            let mut text = String::from("field,kernel,m,n,closed,oracle,diff\n");
            let mut worst: Option<(f64, i32, i32)> = None;
            let mut count = 0;
            for field in [FieldKind::ScalarMassless, FieldKind::DiracMassless] {
                for r in oracle_check(field, label_max)? {
                    let name = match field {
                        FieldKind::ScalarMassless => "scalar",
                        FieldKind::DiracMassless => "dirac",
                    };
                    text.push_str(&format!(
                        "{name},{},{},{},{},{},{}\n",
                        r.kernel,
                        r.m,
                        r.n,
                        csv_float(r.closed),
                        csv_float(r.oracle),
                        csv_float(r.diff)
                    ));
                    if !(r.diff <= ORACLE_TOL) {
                        count += 1;
                        if worst.is_none_or(|w| r.diff > w.0) {
                            worst = Some((r.diff, r.m, r.n));
                        }
                    }
                }
            }
            let out = emit(common.out.as_deref().or(cfg.output.csv.as_deref()), text)?;
            match worst {
                Some((worst, m, n)) => {
                    if let Some(t) = out {
                        print!("{t}");
                    }
                    Err(CliError::Oracle { count, worst, m, n })
                }
                None => Ok(out),
            }
        }
    }
}
