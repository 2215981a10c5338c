//! End-to-end pipelines: three-cavity pair states (scenario A), the
//! single-cavity vacuum (scenario B) and the resonance scan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{compile_trajectory, BogoMap};
use crate::entanglement::{
    dicke4, fidelity, fidelity_numeric, negativity_first_order, negativity_numeric, w3, witness, witness_refined,
    DickeSigns, WitnessKind, WitnessReport,
};
use crate::error::{Error, Result};
use crate::fock::{
    reduce_to_parties, reduce_to_parties_numeric, transform_in_state, vacuum_kernel, DensityMatrixP, FermionOrder,
    FockStateP, InOp, InTerm, Layout, NumericDensity, Slot,
};
use crate::geometry::{tau_from_u, CavityConfig, Statistics, Trajectory};
use crate::series::{OrderSeries, C64};

/// Default bound on N·h.
pub const REGIME_LIMIT: f64 = 0.1;

/// Numeric h samples for root-term scaling fits.
pub const ROOT_SAMPLES: [f64; 3] = [4e-3, 2e-3, 1e-3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ScenarioOptions {
    pub allow_large_nh: bool,
    pub fermion_order: FermionOrder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegativityEntry {
    pub parties: Vec<String>,
    /// 𝒩 = first_order[0] + first_order[1]·h + O(h²)
    pub first_order: [f64; 2],
    /// from the untruncated state at the scenario's h
    pub at_h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityEntry {
    pub state: String,
    pub value: OrderSeries,
    pub at_h: f64,
}

/// f^β_{m¬p} read off the reduced populations (half the population) and
/// from the kernel directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixednessEntry {
    pub name: String,
    pub from_density: f64,
    pub predicted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub scenario: ScenarioId,
    pub statistics: Statistics,
    pub modes: Vec<i32>,
    pub sign: Option<i8>,
    pub trajectory: Trajectory,
    pub h: f64,
    pub n_max: usize,
    pub regime_warning: Option<String>,
    pub witness: WitnessReport,
    pub witness_at_h: f64,
    /// first-order (scenario A, B fermionic) or second-order (B bosonic)
    /// coefficient of the printed simplified witness
    pub simplified_coefficient: f64,
    pub negativities: Vec<NegativityEntry>,
    /// scenario A, fermionic
    pub dicke_fidelity: Option<FidelityEntry>,
    /// scenario B, fermionic
    pub w_fidelity: Option<FidelityEntry>,
    pub mixedness: Vec<MixednessEntry>,
    pub trace_defect: OrderSeries,
    pub reduced: DensityMatrixP,
}

impl ScenarioResult {
    pub fn negativity(&self, a: &str, b: &str) -> Option<&NegativityEntry> {
        self.negativities.iter().find(|n| n.parties == [a, b])
    }
}

fn regime(cfg: &CavityConfig, traj: &Trajectory, h: f64, opts: &ScenarioOptions) -> Result<Option<String>> {
    let n = traj.accelerated_count().max(1) as f64;
    let nh = n * traj.max_h().max(h);
    if nh <= REGIME_LIMIT {
        return Ok(None);
    }
    if !opts.allow_large_nh {
        return Err(Error::RegimeGuard { nh, limit: REGIME_LIMIT });
    }
    let _ = cfg;
    Ok(Some(format!("N*h = {nh} exceeds {REGIME_LIMIT}; perturbative results may be unreliable")))
}

fn compile(cfg: &CavityConfig, traj: &Trajectory, h: f64) -> Result<BogoMap> {
    cfg.validate()?;
    if !(h.is_finite() && (0.0..2.0).contains(&h)) {
        return Err(Error::HOutOfRange(h));
    }
    let map = compile_trajectory(cfg, traj, false)?;
    if let Some(r) = map.h_ref() {
        if h > 0.0 && (h - r.h).abs() > 1e-12 * r.h {
            return Err(Error::InvalidConfig(format!(
                "h = {h} must equal the first accelerated segment's h = {} (or be 0 for the unmoved limit)",
                r.h
            )));
        }
    }
    Ok(map)
}

fn normalized(mut d: NumericDensity) -> NumericDensity {
    let t = d.matrix.trace();
    d.matrix /= t;
    d
}

fn check_modes(cfg: &CavityConfig, modes: &[i32]) -> Result<()> {
    for (i, &m) in modes.iter().enumerate() {
        cfg.check_interior(m)?;
        if modes[..i].contains(&m) {
            return Err(Error::InvalidModes(format!("modes must be distinct, got {modes:?}")));
        }
    }
    Ok(())
}

fn trace_defect(rho: &DensityMatrixP) -> OrderSeries {
    rho.trace() - OrderSeries::ONE
}

type Party<'a> = (Slot, &'a str);

fn negativities(psi: &FockStateP, layout: &Layout, pairs: &[(Party, Party)], h: f64) -> Result<Vec<NegativityEntry>> {
    pairs
        .iter()
        .map(|&(p, q)| {
            let two = reduce_to_parties(psi, layout, &[p.0, q.0])?;
            let (n0, n1) = negativity_first_order(&two, &[0])?;
            let num = normalized(reduce_to_parties_numeric(psi, layout, &[p.0, q.0], h)?);
            Ok(NegativityEntry {
                parties: vec![p.1.to_string(), q.1.to_string()],
                first_order: [n0, n1],
                at_h: negativity_numeric(&num, &[0])?,
            })
        })
        .collect()
}

/// Scenario A: Alice and Charlie each share a pair state with Rob, whose
/// cavity moves along `traj`. `modes` are (k, k′) or (κ ≥ 0, κ′ < 0).
pub fn run_scenario_a(
    cfg: &CavityConfig,
    traj: &Trajectory,
    h: f64,
    modes: (i32, i32),
    sign: i8,
    opts: &ScenarioOptions,
) -> Result<ScenarioResult> {
    let stats = cfg.field.statistics();
    let (k, kp) = modes;
    check_modes(cfg, &[k, kp])?;
    if stats == Statistics::Fermionic && !(k >= 0 && kp < 0) {
        return Err(Error::InvalidModes(format!("need a particle mode >= 0 and an antiparticle mode < 0, got ({k}, {kp})")));
    }
    if sign != 1 && sign != -1 {
        return Err(Error::InvalidConfig(format!("sign must be +1 or -1, got {sign}")));
    }
    let warning = regime(cfg, traj, h, opts)?;
    let map = compile(cfg, traj, h)?;
    let layout = Layout::multi_cavity(stats, map.basis(), opts.fermion_order);
    let s = f64::from(sign);
    let half = C64::new(0.5, 0.0);
    let terms = vec![
        InTerm { coef: half, ops: vec![] },
        InTerm { coef: half * s, ops: vec![InOp::A, InOp::Rob(k)] },
        InTerm { coef: half * s, ops: vec![InOp::Rob(kp), InOp::C] },
        InTerm { coef: half, ops: vec![InOp::A, InOp::Rob(k), InOp::Rob(kp), InOp::C] },
    ];
    let psi = transform_in_state(&map, &terms, &layout)?;
    let parties = [Slot::A, Slot::Rob(k), Slot::Rob(kp), Slot::C];
    let rho = reduce_to_parties(&psi, &layout, &parties)?;
    let kind = match stats {
        Statistics::Bosonic => WitnessKind::A1,
        Statistics::Fermionic => WitnessKind::A2,
    };
    let w = witness(kind, &rho)?;
    let kernel = map.kernel_of(k, kp)?.norm();
    let (rk, rkp) = (Slot::Rob(k), Slot::Rob(kp));
    let (nk, nkp) = match stats {
        Statistics::Bosonic => ("k", "k'"),
        Statistics::Fermionic => ("kappa", "kappa'"),
    };
    let negs = negativities(
        &psi,
        &layout,
        &[((rk, nk), (rkp, nkp)), ((Slot::A, "A"), (rk, nk)), ((Slot::A, "A"), (Slot::C, "C"))],
        h,
    )?;
    let mut dicke_fidelity = None;
    if stats == Statistics::Fermionic {
        let d = dicke4(&map, k, kp, DickeSigns::from_initial_state(s), &layout)?;
        let num = normalized(reduce_to_parties_numeric(&psi, &layout, &parties, h)?);
        dicke_fidelity = Some(FidelityEntry {
            state: "dicke".into(),
            value: fidelity(&rho, &d)?,
            at_h: fidelity_numeric(&num, &d, h)?,
        });
    }
    Ok(ScenarioResult {
        scenario: ScenarioId::A,
        statistics: stats,
        modes: vec![k, kp],
        sign: Some(sign),
        trajectory: traj.clone(),
        h,
        n_max: cfg.n_max,
        regime_warning: warning,
        witness_at_h: w.value.eval(h).re,
        witness: w,
        simplified_coefficient: 0.5 * kernel,
        negativities: negs,
        dicke_fidelity,
        w_fidelity: None,
        mixedness: Vec::new(),
        trace_defect: trace_defect(&rho),
        reduced: rho,
    })
}

fn check_parity_b(stats: Statistics, (k, kp, kpp): (i32, i32, i32)) -> Result<()> {
    let odd = |x: i32| x.rem_euclid(2) == 1;
    let ok = match stats {
        Statistics::Bosonic => odd(k - kp) && odd(kp - kpp),
        Statistics::Fermionic => k >= 0 && kp >= 0 && kpp < 0 && !odd(k + kp) && odd(k + kpp),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidModes(format!("modes ({k}, {kp}, {kpp}) violate the required parity/charge pattern")))
    }
}

/// Scenario B: the vacuum of Rob's cavity, reduced to three modes.
pub fn run_scenario_b(
    cfg: &CavityConfig,
    traj: &Trajectory,
    h: f64,
    modes: (i32, i32, i32),
    opts: &ScenarioOptions,
) -> Result<ScenarioResult> {
    let stats = cfg.field.statistics();
    let (k, kp, kpp) = modes;
    check_modes(cfg, &[k, kp, kpp])?;
    check_parity_b(stats, modes)?;
    let warning = regime(cfg, traj, h, opts)?;
    let map = compile(cfg, traj, h)?;
    let layout = Layout::single_cavity(stats, map.basis(), opts.fermion_order);
    let psi = vacuum_kernel(&map)?.vacuum_state(&layout)?;
    let parties = [Slot::Rob(k), Slot::Rob(kp), Slot::Rob(kpp)];
    let rho = reduce_to_parties(&psi, &layout, &parties)?;
    let kern = |a: i32, b: i32| map.kernel_of(a, b).map(|z| z.norm());
    let mut w_fidelity = None;
    let mut mixedness = Vec::new();
    let (w, simplified) = match stats {
        Statistics::Bosonic => {
            let samples: Vec<(f64, NumericDensity)> = ROOT_SAMPLES
                .iter()
                .map(|&x| Ok((x, reduce_to_parties_numeric(&psi, &layout, &parties, x)?)))
                .collect::<Result<_>>()?;
            let w = witness_refined(WitnessKind::A3, &rho, &samples)?;
            let f = |m: i32, excl: &[i32]| -> Result<f64> {
                let i = map.basis().index(m)?;
                Ok(0.5
                    * map
                        .basis()
                        .labels
                        .iter()
                        .enumerate()
                        .filter(|(_, l)| !excl.contains(l))
                        .map(|(j, _)| map.kernel()[(i, j)].norm_sqr())
                        .sum::<f64>())
            };
            for (name, occ, m, excl) in [
                ("f_k_not_k'", [1u8, 0, 0], k, vec![kp]),
                ("f_k'_not_k_k''", [0, 1, 0], kp, vec![k, kpp]),
                ("f_k''_not_k'", [0, 0, 1], kpp, vec![kp]),
            ] {
                mixedness.push(MixednessEntry {
                    name: name.into(),
                    from_density: 0.5 * rho.element(&occ, &occ).c2.re,
                    predicted: f(m, &excl)?,
                });
            }
            (w, 2.0 * 2f64.sqrt() * kern(k, kp)? * kern(kp, kpp)?)
        }
        Statistics::Fermionic => {
            let w = witness(WitnessKind::A4, &rho)?;
            let (a, b) = (kern(k, kpp)?, kern(kp, kpp)?);
            let ws = w3(&map, k, kp, kpp, &layout)?;
            let num = normalized(reduce_to_parties_numeric(&psi, &layout, &parties, h)?);
            w_fidelity = Some(FidelityEntry { state: "w".into(), value: fidelity(&rho, &ws)?, at_h: fidelity_numeric(&num, &ws, h)? });
            (w, a + b - (a * a + b * b).sqrt())
        }
    };
    Ok(ScenarioResult {
        scenario: ScenarioId::B,
        statistics: stats,
        modes: vec![k, kp, kpp],
        sign: None,
        trajectory: traj.clone(),
        h,
        n_max: cfg.n_max,
        regime_warning: warning,
        witness_at_h: w.value.eval(h).re,
        witness: w,
        simplified_coefficient: simplified,
        negativities: Vec::new(),
        dicke_fidelity: None,
        w_fidelity,
        mixedness,
        trace_defect: trace_defect(&rho),
        reduced: rho,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Resonance {
    pub u: f64,
    pub j: u32,
    /// whether the single-block kernel is nonzero there, so a peak can form
    pub active: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanResult {
    pub h: f64,
    pub n_blocks: usize,
    pub n_max: usize,
    pub pairs: Vec<(i32, i32)>,
    pub u: Vec<f64>,
    /// values[p][i] = |β̂⁽¹⁾| (or |Â⁽¹⁾|) per unit h for pair p at u[i]
    pub values: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<Resonance>>,
}

/// Kernel magnitudes per unit h for `n` blocks at block parameter u.
pub fn block_kernels(cfg: &CavityConfig, h: f64, n: usize, u: f64, pairs: &[(i32, i32)]) -> Result<Vec<f64>> {
    let tau = tau_from_u(h, u, cfg.delta)?;
    let map = compile_trajectory(cfg, &Trajectory::blocks(h, tau, n)?, false)?;
    pairs.iter().map(|&(m, n)| map.kernel_of(m, n).map(|z| z.norm())).collect()
}

/// Relative size below which a single-block kernel counts as vanishing.
const ACTIVE_TOL: f64 = 1e-6;

pub fn resonance_scan(
    cfg: &CavityConfig,
    h: f64,
    n_blocks: usize,
    pairs: &[(i32, i32)],
    u_range: (f64, f64),
    u_steps: usize,
    opts: &ScenarioOptions,
) -> Result<ScanResult> {
    cfg.validate()?;
    let (lo, hi) = u_range;
    if n_blocks == 0 || u_steps == 0 || !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(Error::InvalidConfig(format!("bad scan: N = {n_blocks}, steps = {u_steps}, range = ({lo}, {hi}]")));
    }
    if pairs.is_empty() {
        return Err(Error::InvalidConfig("no mode pairs requested".into()));
    }
    for &(m, n) in pairs {
        cfg.basis().index(m)?;
        cfg.basis().index(n)?;
    }
    let nh = n_blocks as f64 * h;
    if nh > REGIME_LIMIT && !opts.allow_large_nh {
        return Err(Error::RegimeGuard { nh, limit: REGIME_LIMIT });
    }
    let u: Vec<f64> = (1..=u_steps).map(|i| lo + (hi - lo) * i as f64 / u_steps as f64).collect();
    let rows: Vec<Vec<f64>> = u.par_iter().map(|&x| block_kernels(cfg, h, n_blocks, x, pairs)).collect::<Result<_>>()?;
    let values = (0..pairs.len()).map(|p| rows.iter().map(|r| r[p]).collect()).collect();
    let mut predicted = Vec::with_capacity(pairs.len());
    for (p, &(m, n)) in pairs.iter().enumerate() {
        let s = (m.abs() + n.abs()) as f64;
        let scale = u.iter().map(|&x| block_kernels(cfg, h, 1, x, pairs).map(|v| v[p])).collect::<Result<Vec<_>>>()?;
        let scale = scale.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        let mut v = Vec::new();
        let mut j = 1u32;
        while j as f64 / s <= hi + 1e-12 {
            let at = j as f64 / s;
            if at > lo {
                let one = block_kernels(cfg, h, 1, at, pairs)?[p];
                v.push(Resonance { u: at, j, active: one > ACTIVE_TOL * scale });
            }
            j += 1;
        }
        predicted.push(v);
    }
    Ok(ScanResult { h, n_blocks, n_max: cfg.n_max, pairs: pairs.to_vec(), u, values, predicted })
}

/// Largest change in the scanned values when n_max is doubled.
pub fn scan_convergence(cfg: &CavityConfig, scan: &ScanResult) -> Result<f64> {
    let big = CavityConfig { n_max: 2 * cfg.n_max, ..*cfg };
    let rows: Vec<Vec<f64>> = scan.u.par_iter().map(|&x| block_kernels(&big, scan.h, scan.n_blocks, x, &scan.pairs)).collect::<Result<_>>()?;
    Ok(rows
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().map(move |(p, v)| (p, i, *v)))
        .map(|(p, i, v)| (v - scan.values[p][i]).abs())
        .fold(0.0, f64::max))
}

/// Indices of strict interior local maxima of `v`.
pub fn local_maxima(v: &[f64]) -> Vec<usize> {
    (1..v.len().saturating_sub(1)).filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PhaseConvention;

    fn scalar() -> CavityConfig {
        CavityConfig::scalar(8).unwrap()
    }

    #[test]
    fn regime_guard() {
        let traj = Trajectory::blocks(0.05, 1.0, 3).unwrap();
        let e = run_scenario_a(&scalar(), &traj, 0.05, (1, 2), 1, &ScenarioOptions::default()).unwrap_err();
        assert!(matches!(e, Error::RegimeGuard { .. }));
        let opts = ScenarioOptions { allow_large_nh: true, ..Default::default() };
        let r = run_scenario_a(&scalar(), &traj, 0.05, (1, 2), 1, &opts).unwrap();
        assert!(r.regime_warning.is_some());
    }

    #[test]
    fn mode_checks() {
        let traj = Trajectory::blocks(0.01, 1.0, 1).unwrap();
        let o = ScenarioOptions::default();
        assert!(run_scenario_a(&scalar(), &traj, 0.01, (1, 1), 1, &o).is_err());
        assert!(run_scenario_a(&scalar(), &traj, 0.01, (1, 7), 1, &o).is_err());
        assert!(run_scenario_a(&scalar(), &traj, 0.02, (1, 2), 1, &o).is_err());
        assert!(run_scenario_b(&scalar(), &traj, 0.01, (1, 3, 2), &o).is_err());
        let d = CavityConfig::dirac(6).unwrap();
        assert!(run_scenario_a(&d, &traj, 0.01, (-1, 2), 1, &o).is_err());
        assert!(run_scenario_b(&d, &traj, 0.01, (1, 2, -2), &o).is_err());
    }

    #[test]
    fn unmoved_limit_has_zero_witness() {
        let traj = Trajectory::new(vec![crate::geometry::Segment::inertial(1.0).unwrap()]).unwrap();
        let r = run_scenario_a(&scalar(), &traj, 0.0, (1, 2), 1, &ScenarioOptions::default()).unwrap();
        assert_eq!(r.witness_at_h, 0.0);
        assert!(!r.witness.violated);
    }

    #[test]
    fn bosonic_a_first_order() {
        let traj = Trajectory::blocks(0.01, 1.0, 1).unwrap();
        let r = run_scenario_a(&scalar(), &traj, 0.01, (1, 2), 1, &ScenarioOptions::default()).unwrap();
        let b = 2.0 * r.simplified_coefficient;
        assert!(r.witness.violated && r.witness.leading_order == Some(1));
        // witness = 2 × (k,k′) negativity at first order
        let n = r.negativity("k", "k'").unwrap();
        assert!((r.witness.value.c1.re - 2.0 * n.first_order[1]).abs() < 1e-12);
        assert!((r.witness.value.c1.re - b).abs() < 1e-12);
        assert_eq!(r.negativity("A", "C").unwrap().first_order, [0.0, 0.0]);
        assert!(r.trace_defect.c0.norm() < 1e-14 && r.trace_defect.c1.norm() < 1e-14);
    }

    #[test]
    fn fermionic_a_dicke() {
        let cfg = CavityConfig::dirac(6).unwrap();
        let traj = Trajectory::blocks(0.01, 1.0, 1).unwrap();
        for order in [FermionOrder::Forward, FermionOrder::Reversed] {
            let o = ScenarioOptions { fermion_order: order, ..Default::default() };
            let r = run_scenario_a(&cfg, &traj, 0.01, (1, -2), -1, &o).unwrap();
            let f = &r.dicke_fidelity.as_ref().unwrap().value;
            assert!((f.c0.re - 1.0).abs() < 1e-14 && f.c1.norm() < 1e-13, "{order:?} {f}");
            let ak = r.negativity("A", "kappa").unwrap();
            assert!((ak.first_order[0] - 0.5).abs() < 1e-12 && ak.first_order[1].abs() < 1e-12);
            assert!(r.negativity("kappa", "kappa'").unwrap().at_h < 1e-14);
        }
    }

    #[test]
    fn bosonic_b_witness_and_mixedness() {
        let traj = Trajectory::blocks(0.01, 2.0, 1).unwrap();
        let r = run_scenario_b(&scalar(), &traj, 0.01, (1, 2, 3), &ScenarioOptions::default()).unwrap();
        assert_eq!(r.witness.leading_order, Some(2));
        assert!((r.witness.value.c2.re - r.simplified_coefficient).abs() < 1e-15);
        for m in &r.mixedness {
            assert!((m.from_density - m.predicted).abs() < 1e-15, "{m:?}");
        }
    }

    #[test]
    fn conjugate_convention_invariance() {
        let traj = Trajectory::blocks(0.01, 0.7, 2).unwrap();
        let cfg = CavityConfig::dirac(6).unwrap();
        let a = run_scenario_b(&cfg, &traj, 0.01, (1, 3, -2), &ScenarioOptions::default()).unwrap();
        let b = run_scenario_b(&cfg.with_convention(PhaseConvention::Conjugate), &traj, 0.01, (1, 3, -2), &ScenarioOptions::default()).unwrap();
        assert!(a.witness.value.max_abs_diff(&b.witness.value) < 1e-12);
        assert!((a.w_fidelity.unwrap().at_h - b.w_fidelity.unwrap().at_h).abs() < 1e-12);
    }

    #[test]
    fn scan_grid_and_order() {
        let cfg = scalar();
        let s = resonance_scan(&cfg, 0.005, 2, &[(1, 2)], (0.0, 1.0), 4, &ScenarioOptions::default()).unwrap();
        assert_eq!(s.u, vec![0.25, 0.5, 0.75, 1.0]);
        for (i, &u) in s.u.iter().enumerate() {
            assert_eq!(s.values[0][i], block_kernels(&cfg, 0.005, 2, u, &[(1, 2)]).unwrap()[0]);
        }
        assert_eq!(s.predicted[0].iter().map(|r| r.j).collect::<Vec<_>>(), vec![1, 2, 3]);
        let one = resonance_scan(&cfg, 0.005, 1, &[(1, 2)], (0.0, 0.5), 1, &ScenarioOptions::default()).unwrap();
        assert_eq!(one.u.len(), 1);
        assert!(scan_convergence(&cfg, &s).unwrap() < 1e-15);
    }
}
