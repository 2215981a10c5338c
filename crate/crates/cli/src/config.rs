//! Run configuration: one JSON file plus flag overrides.

use std::path::PathBuf;

use cavity_gme::fock::FermionOrder;
use cavity_gme::{CavityConfig, FieldKind, PhaseConvention, Segment, Trajectory};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn one() -> f64 {
    1.0
}

fn default_n_max() -> usize {
    12
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySpec {
    #[serde(default = "one")]
    pub delta: f64,
    pub field: FieldKind,
    #[serde(default = "default_n_max")]
    pub n_max: usize,
    #[serde(default)]
    pub phase_convention: PhaseConvention,
}

impl Default for CavitySpec {
    fn default() -> Self {
        Self { delta: 1.0, field: FieldKind::ScalarMassless, n_max: default_n_max(), phase_convention: PhaseConvention::Positive }
    }
}

/// One trajectory segment; `h` absent means inertial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    /// `n` blocks of [accelerated τ/2, inertial τ/2]
    Blocks { h: f64, tau: f64, n: usize },
    Segments(Vec<SegmentSpec>),
}

impl Default for TrajectorySpec {
    fn default() -> Self {
        Self::Blocks { h: 0.01, tau: 1.0, n: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub modes: Vec<i32>,
    #[serde(default = "plus")]
    pub sign: i8,
    #[serde(default)]
    pub fermion_order: FermionOrder,
}

fn plus() -> i8 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    #[serde(default = "default_pairs")]
    pub pairs: Vec<(i32, i32)>,
    #[serde(default)]
    pub u_min: f64,
    #[serde(default = "default_u_max")]
    pub u_max: f64,
    #[serde(default = "default_steps")]
    pub u_steps: usize,
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    #[serde(default = "default_scan_h")]
    pub h: f64,
}

fn default_pairs() -> Vec<(i32, i32)> {
    vec![(1, 2), (2, 3)]
}
fn default_u_max() -> f64 {
    1.2
}
fn default_steps() -> usize {
    600
}
fn default_blocks() -> usize {
    15
}
fn default_scan_h() -> f64 {
    0.005
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            pairs: default_pairs(),
            u_min: 0.0,
            u_max: default_u_max(),
            u_steps: default_steps(),
            blocks: default_blocks(),
            h: default_scan_h(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub cavity: CavitySpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<TrajectorySpec>,
    /// evaluation point; defaults to the trajectory's h
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<ScenarioSpec>,
    #[serde(default)]
    pub scan: ScanSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub allow_large_nh: bool,
    #[serde(default)]
    pub output: OutputSpec,
}

/// Upper bounds that keep a hostile config from exhausting memory.
pub const MAX_BLOCKS: usize = 10_000;
pub const MAX_SEGMENTS: usize = 20_000;
pub const MAX_U_STEPS: usize = 1_000_000;
pub const MAX_PAIRS: usize = 64;

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub h: Option<f64>,
    pub n_max: Option<usize>,
    pub blocks: Option<usize>,
    pub pairs: Vec<(i32, i32)>,
    pub seed: Option<u64>,
    pub allow_large_nh: bool,
}

impl RunConfig {
    pub fn from_json(s: &str) -> Result<Self, CliError> {
        serde_json::from_str(s).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(n) = o.n_max {
            self.cavity.n_max = n;
        }
        if let Some(h) = o.h {
            self.h = Some(h);
            self.scan.h = h;
            match &mut self.trajectory {
                Some(TrajectorySpec::Blocks { h: bh, .. }) => *bh = h,
                Some(TrajectorySpec::Segments(v)) => v.iter_mut().filter(|s| s.h.is_some()).for_each(|s| s.h = Some(h)),
                None => {}
            }
        }
        if let Some(b) = o.blocks {
            self.scan.blocks = b;
            let h = self.h;
            let t = self.trajectory.get_or_insert_with(|| Self::default_trajectory(h));
            if let TrajectorySpec::Blocks { n, .. } = t {
                *n = b;
            }
        }
        if !o.pairs.is_empty() {
            self.scan.pairs = o.pairs.clone();
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        self.allow_large_nh |= o.allow_large_nh;
    }

    /// Size limits; value-level checks are left to the core constructors.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        match &self.trajectory {
            Some(TrajectorySpec::Blocks { n, .. }) if *n > MAX_BLOCKS => return bad(format!("{n} blocks exceeds {MAX_BLOCKS}")),
            Some(TrajectorySpec::Segments(v)) if v.len() > MAX_SEGMENTS => {
                return bad(format!("{} segments exceeds {MAX_SEGMENTS}", v.len()))
            }
            _ => {}
        }
        if self.scan.blocks > MAX_BLOCKS {
            return bad(format!("{} scan blocks exceeds {MAX_BLOCKS}", self.scan.blocks));
        }
        if self.scan.u_steps > MAX_U_STEPS {
            return bad(format!("{} scan steps exceeds {MAX_U_STEPS}", self.scan.u_steps));
        }
        if self.scan.pairs.len() > MAX_PAIRS {
            return bad(format!("{} scan pairs exceeds {MAX_PAIRS}", self.scan.pairs.len()));
        }
        Ok(())
    }

    pub fn cavity(&self) -> Result<CavityConfig, CliError> {
        Ok(CavityConfig::new(self.cavity.delta, self.cavity.field, self.cavity.n_max)?.with_convention(self.cavity.phase_convention))
    }

    fn default_trajectory(h: Option<f64>) -> TrajectorySpec {
        match (TrajectorySpec::default(), h) {
            (TrajectorySpec::Blocks { tau, n, .. }, Some(h)) => TrajectorySpec::Blocks { h, tau, n },
            (t, _) => t,
        }
    }

    /// The trajectory, with h = 0 meaning the unmoved cavity (inertial
    /// segments of the same total duration).
    pub fn trajectory(&self) -> Result<Trajectory, CliError> {
        let spec = self.trajectory.clone().unwrap_or_else(|| Self::default_trajectory(self.h));
        let t = match spec {
            TrajectorySpec::Blocks { h, tau, n } if h == 0.0 => {
                if n == 0 {
                    return Err(CliError::Config("trajectory needs at least one block".into()));
                }
                Trajectory::new(vec![Segment::inertial(tau * n as f64)?])?
            }
            TrajectorySpec::Blocks { h, tau, n } => {
                if n == 0 {
                    return Err(CliError::Config("trajectory needs at least one block".into()));
                }
                Trajectory::blocks(h, tau, n)?
            }
            TrajectorySpec::Segments(v) => {
                if v.is_empty() {
                    return Err(CliError::Config("trajectory has no segments".into()));
                }
                let segs = v
                    .iter()
                    .map(|s| match s.h {
                        None | Some(0.0) => Segment::inertial(s.duration),
                        Some(h) => Segment::accelerated(h, s.duration),
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Trajectory::new(segs)?
            }
        };
        Ok(t)
    }

    /// Evaluation point: explicit h, else the largest trajectory h.
    pub fn eval_h(&self, traj: &Trajectory) -> f64 {
        self.h.unwrap_or_else(|| traj.max_h())
    }

    pub fn fermion_order(&self) -> FermionOrder {
        self.scenario.as_ref().map(|s| s.fermion_order).unwrap_or_default()
    }
}

/// Parses a `--pair m,n` argument.
pub fn parse_pair(s: &str) -> Result<(i32, i32), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected m,n, got {s:?}"))?;
    let p = |x: &str| x.trim().parse::<i32>().map_err(|e| format!("bad mode label {x:?}: {e}"));
    Ok((p(a)?, p(b)?))
}
