//! Independent single-switch overlaps by Gauss–Legendre quadrature on the
//! t = 0 slice. Used to validate the closed-form kernels and to build full
//! (non-perturbative) truncated maps.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::geometry::{check_h, FieldKind};
use crate::series::C64;

/// Quadrature target, absolute.
pub const QUAD_TOL: f64 = 1e-14;
const MAX_NODES: usize = 2048;

/// Richardson ladder for the first-order kernels.
pub const RICHARDSON_H: [f64; 4] = [0.02, 0.01, 0.005, 0.0025];

/// Gauss–Legendre rule mapped to [0, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Tricomi initial guess, then Newton on P_n
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = 0.5 * (1.0 - x);
            nodes[n - 1 - i] = 0.5 * (1.0 + x);
            weights[i] = 0.5 * w;
            weights[n - 1 - i] = 0.5 * w;
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn rule(n: usize) -> &'static GaussLegendre {
    static RULES: OnceLock<Vec<GaussLegendre>> = OnceLock::new();
    let rules = RULES.get_or_init(|| {
        let mut v = Vec::new();
        let mut k = 32;
        while k <= MAX_NODES {
            v.push(GaussLegendre::new(k));
            k *= 2;
        }
        v
    });
    rules.iter().find(|r| r.nodes.len() >= n).unwrap_or_else(|| rules.last().unwrap())
}

/// Integrates over [0, 1], doubling the node count until two successive
/// rules agree to `tol`.
pub fn integrate_unit<F: Fn(f64) -> f64>(f: F, tol: f64) -> Result<f64> {
    let mut n = 32;
    let mut prev = rule(n).integrate(&f);
    let mut diff = f64::INFINITY;
    while n < MAX_NODES {
        n *= 2;
        let cur = rule(n).integrate(&f);
        diff = (cur - prev).abs();
        if diff <= tol * cur.abs().max(1.0) {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::QuadratureNonConvergence { achieved: diff, requested: tol })
}

/// Cavity at the switch instant, δ = 1: inertial coordinate ξ ∈ [0, 1],
/// Rindler position x = a + ξ with a = 1/h − 1/2, and L = ln(b/a).
#[derive(Debug, Clone, Copy)]
struct Slice {
    a: f64,
    eps: f64,
    l: f64,
}

impl Slice {
    fn new(h: f64) -> Self {
        let eps = h / (1.0 - h / 2.0);
        Self { a: 1.0 / h - 0.5, eps, l: eps.ln_1p() }
    }

    /// Normalized Rindler log-coordinate ln(x/a)/L.
    fn s(&self, xi: f64) -> f64 {
        (self.eps * xi).ln_1p() / self.l
    }

    /// x·L, computed without cancellation.
    fn xl(&self, xi: f64) -> f64 {
        (self.a + xi) * self.l
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleValue {
    Boson { alpha: C64, beta: C64 },
    Fermion { a: C64 },
}

/// Exact single-switch overlaps (inertial mode n, accelerated mode m) at
/// finite h. Scalar labels are ≥ 1; Dirac labels are signed.
pub fn oracle_coefficients(field: FieldKind, h: f64, m: i32, n: i32) -> Result<OracleValue> {
    check_h(h)?;
    let sl = Slice::new(h);
    match field {
        FieldKind::ScalarMassless => {
            if m < 1 || n < 1 {
                return Err(Error::InvalidModes(format!("scalar labels must be positive, got ({m}, {n})")));
            }
            let (mf, nf) = (m as f64 * PI, n as f64 * PI);
            let norm = 1.0 / (mf * nf).sqrt();
            let fg = |xi: f64| norm * (nf * xi).sin() * (mf * sl.s(xi)).sin();
            let alpha = integrate_unit(|xi| fg(xi) * (nf + mf / sl.xl(xi)), QUAD_TOL)?;
            let beta = integrate_unit(|xi| fg(xi) * (nf - mf / sl.xl(xi)), QUAD_TOL)?;
            Ok(OracleValue::Boson { alpha: alpha.into(), beta: beta.into() })
        }
        FieldKind::DiracMassless => {
            let (mf, nf) = (m as f64 * PI, n as f64 * PI);
            let a = integrate_unit(|xi| (mf * sl.s(xi) - nf * xi).cos() / sl.xl(xi).sqrt(), QUAD_TOL)?;
            Ok(OracleValue::Fermion { a: a.into() })
        }
    }
}

/// First-order kernels extracted by Richardson extrapolation of
/// (x(h) − x(0))/h over [`RICHARDSON_H`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderEstimate {
    /// α̂ (scalar) or Â (Dirac)
    pub alpha1: C64,
    /// β̂ (scalar only)
    pub beta1: Option<C64>,
    /// difference between the last two Richardson diagonals
    pub spread: f64,
}

pub fn oracle_first_order(field: FieldKind, m: i32, n: i32) -> Result<FirstOrderEstimate> {
    let d = if m == n { 1.0 } else { 0.0 };
    let mut av = Vec::with_capacity(RICHARDSON_H.len());
    let mut bv = Vec::with_capacity(RICHARDSON_H.len());
    for &h in &RICHARDSON_H {
        match oracle_coefficients(field, h, m, n)? {
            OracleValue::Boson { alpha, beta } => {
                av.push((alpha.re - d) / h);
                bv.push(beta.re / h);
            }
            OracleValue::Fermion { a } => av.push((a.re - d) / h),
        }
    }
    let (a1, sa) = richardson(&av);
    let (beta1, sb) = if bv.is_empty() {
        (None, 0.0)
    } else {
        let (b, s) = richardson(&bv);
        (Some(C64::new(b, 0.0)), s)
    };
    Ok(FirstOrderEstimate { alpha1: a1.into(), beta1, spread: sa.max(sb) })
}

/// Richardson table for samples at h, h/2, h/4, … of a function analytic in
/// h. Returns the top value and its change from the previous diagonal.
pub fn richardson(v: &[f64]) -> (f64, f64) {
    let mut col = v.to_vec();
    let mut prev_top = col[col.len() - 1];
    let mut top = prev_top;
    let mut j = 1;
    while col.len() > 1 {
        let f = 2f64.powi(j);
        col = col.windows(2).map(|w| (f * w[1] - w[0]) / (f - 1.0)).collect();
        prev_top = top;
        top = col[col.len() - 1];
        j += 1;
    }
    (top, (top - prev_top).abs())
}
