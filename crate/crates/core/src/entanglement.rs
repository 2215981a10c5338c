//! Negativity, the four complete GME witnesses and the canonical Dicke / W
//! states.
//!
//! Witnesses are written once over [`DensityView`], so the same formula is
//! evaluated on truncated series ([`DensityMatrixP`]) and on numeric
//! matrices ([`NumericDensity`]).

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::BogoMap;
use crate::error::{Error, Result};
use crate::fock::{flat_index, unflatten, DensityMatrixP, FermionOrder, FockStateP, Layout, NumericDensity, Slot};
use crate::geometry::Statistics;
use crate::series::{modulus, OrderSeries, RealSeries, C64};

/// Threshold below which a leading coefficient counts as zero.
pub const VIOLATION_TOL: f64 = 1e-12;

pub trait RealLike: Clone {
    fn zero() -> Self;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn scale(&self, k: f64) -> Self;
    fn sqrt(&self) -> Result<Self>;
}

impl RealLike for f64 {
    fn zero() -> Self {
        0.0
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn scale(&self, k: f64) -> Self {
        self * k
    }
    fn sqrt(&self) -> Result<Self> {
        if *self < -1e-12 {
            return Err(Error::NegativeSeries(*self));
        }
        Ok(self.max(0.0).sqrt())
    }
}

impl RealLike for RealSeries {
    fn zero() -> Self {
        RealSeries::zero()
    }
    fn add(&self, o: &Self) -> Self {
        *self + *o
    }
    fn sub(&self, o: &Self) -> Self {
        *self - *o
    }
    fn mul(&self, o: &Self) -> Self {
        *self * *o
    }
    fn scale(&self, k: f64) -> Self {
        RealSeries::scale(self, k)
    }
    fn sqrt(&self) -> Result<Self> {
        RealSeries::sqrt(self)
    }
}

/// Read access to matrix elements needed by the witnesses.
pub trait DensityView {
    type Real: RealLike;
    fn local_dims(&self) -> Vec<usize>;
    /// |ρ(row, col)|
    fn modulus(&self, row: &[u8], col: &[u8]) -> Self::Real;
    /// Re ρ(a, a)
    fn diag(&self, a: &[u8]) -> Self::Real;
}

impl DensityView for DensityMatrixP {
    type Real = RealSeries;
    fn local_dims(&self) -> Vec<usize> {
        self.dims()
    }
    fn modulus(&self, row: &[u8], col: &[u8]) -> RealSeries {
        modulus(&self.element(row, col))
    }
    fn diag(&self, a: &[u8]) -> RealSeries {
        RealSeries::from_series_re(&self.element(a, a))
    }
}

impl DensityView for NumericDensity {
    type Real = f64;
    fn local_dims(&self) -> Vec<usize> {
        self.dims.clone()
    }
    fn modulus(&self, row: &[u8], col: &[u8]) -> f64 {
        self.element(row, col).norm()
    }
    fn diag(&self, a: &[u8]) -> f64 {
        self.element(a, a).re
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum WitnessKind {
    A1,
    A2,
    A3,
    A4,
}

/// Diagonal labels summed on each side of one √(a·b) term.
pub type Root = (Vec<Vec<u8>>, Vec<Vec<u8>>);

/// prefactor · (Σ |ρ(r, c)| − Σ √((Σ ρ(a, a)) · (Σ ρ(b, b))))
#[derive(Debug, Clone, PartialEq)]
pub struct WitnessForm {
    pub kind: WitnessKind,
    pub dims: Vec<usize>,
    pub prefactor: f64,
    pub moduli: Vec<(Vec<u8>, Vec<u8>)>,
    pub roots: Vec<Root>,
}

fn occ(s: &str) -> Vec<u8> {
    s.bytes().map(|b| b - b'0').collect()
}

fn occs(v: &[&str]) -> Vec<Vec<u8>> {
    v.iter().map(|s| occ(s)).collect()
}

fn occ_name(o: &[u8]) -> String {
    o.iter().map(|d| char::from(b'0' + d)).collect()
}

/// One root per bipartition: `x` restricted to a side containing the last
/// party, and to its complement.
fn bipartition_roots(x: &[u8]) -> Vec<Root> {
    let n = x.len();
    let last = 1u32 << (n - 1);
    (1..(1u32 << n) - 1)
        .filter(|m| m & last != 0)
        .map(|m| {
            let on = (0..n).map(|i| if m >> i & 1 == 1 { x[i] } else { 0 }).collect();
            let off = (0..n).map(|i| if m >> i & 1 == 1 { 0 } else { x[i] }).collect();
            (vec![on], vec![off])
        })
        .collect()
}

impl WitnessForm {
    /// Parties (A, k, k′, C), bosonic.
    pub fn a1() -> Self {
        let x = occ("1221");
        Self {
            kind: WitnessKind::A1,
            dims: vec![2, 3, 3, 2],
            prefactor: 2.0,
            moduli: vec![(x.clone(), occ("0000"))],
            roots: bipartition_roots(&x),
        }
    }

    /// Parties (A, κ, κ′, C), fermionic; the last root reads |1_A⟩|1_C⟩.
    pub fn a2() -> Self {
        Self {
            kind: WitnessKind::A2,
            dims: vec![2; 4],
            prefactor: 1.0,
            moduli: vec![(occ("0110"), occ("0011")), (occ("1001"), occ("0011"))],
            roots: vec![
                (occs(&["0001"]), occs(&["1011"])),
                (occs(&["0010"]), occs(&["0111"])),
                (occs(&["0011"]), occs(&["0110", "1001"])),
            ],
        }
    }

    /// Parties (k, k′, k″), bosonic.
    pub fn a3() -> Self {
        let x = occ("121");
        Self {
            kind: WitnessKind::A3,
            dims: vec![3, 3, 3],
            prefactor: 2.0,
            moduli: vec![(occ("000"), x.clone())],
            roots: vec![
                (occs(&["100"]), occs(&["021"])),
                (occs(&["001"]), occs(&["120"])),
                (occs(&["020"]), occs(&["101"])),
            ],
        }
    }

    /// Parties (κ, κ′, κ″), fermionic, κ and κ′ particles.
    pub fn a4() -> Self {
        Self {
            kind: WitnessKind::A4,
            dims: vec![2; 3],
            prefactor: 1.0,
            moduli: vec![(occ("000"), occ("101")), (occ("000"), occ("011"))],
            roots: vec![
                (occs(&["000"]), occs(&["101", "011"])),
                (occs(&["001"]), occs(&["010"])),
                (occs(&["001"]), occs(&["100"])),
            ],
        }
    }

    pub fn of(kind: WitnessKind) -> Self {
        match kind {
            WitnessKind::A1 => Self::a1(),
            WitnessKind::A2 => Self::a2(),
            WitnessKind::A3 => Self::a3(),
            WitnessKind::A4 => Self::a4(),
        }
    }

    fn check<D: DensityView>(&self, rho: &D) -> Result<()> {
        let d = rho.local_dims();
        if d.len() != self.dims.len() || d.iter().zip(&self.dims).any(|(have, need)| have < need) {
            return Err(Error::Dimension(format!("{:?} needs local dims {:?}, got {d:?}", self.kind, self.dims)));
        }
        Ok(())
    }

    pub fn evaluate<D: DensityView>(&self, rho: &D) -> Result<WitnessTerms<D::Real>> {
        self.check(rho)?;
        let sum_diag = |v: &[Vec<u8>]| v.iter().fold(D::Real::zero(), |acc, a| acc.add(&rho.diag(a)));
        let moduli: Vec<D::Real> = self.moduli.iter().map(|(r, c)| rho.modulus(r, c)).collect();
        let roots: Vec<D::Real> = self
            .roots
            .iter()
            .map(|(a, b)| sum_diag(a).mul(&sum_diag(b)).sqrt())
            .collect::<Result<_>>()?;
        Ok(WitnessTerms { prefactor: self.prefactor, moduli, roots })
    }

    pub fn term_names(&self) -> Vec<String> {
        let join = |v: &[Vec<u8>]| v.iter().map(|o| format!("rho({0},{0})", occ_name(o))).collect::<Vec<_>>().join("+");
        self.moduli
            .iter()
            .map(|(r, c)| format!("|rho({},{})|", occ_name(r), occ_name(c)))
            .chain(self.roots.iter().map(|(a, b)| format!("sqrt(({})*({}))", join(a), join(b))))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessTerms<R> {
    pub prefactor: f64,
    pub moduli: Vec<R>,
    pub roots: Vec<R>,
}

impl<R: RealLike> WitnessTerms<R> {
    pub fn value(&self) -> R {
        let m = self.moduli.iter().fold(R::zero(), |a, x| a.add(x));
        let r = self.roots.iter().fold(R::zero(), |a, x| a.add(x));
        m.sub(&r).scale(self.prefactor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTerm {
    pub name: String,
    pub value: OrderSeries,
    pub exact_through: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub witness: WitnessKind,
    pub value: OrderSeries,
    /// Highest power of h whose coefficient in `value` is exact.
    pub exact_through: u8,
    pub leading_order: Option<usize>,
    pub leading_coefficient: f64,
    pub violated: bool,
    pub inconclusive: bool,
    pub elements: Vec<NamedTerm>,
    /// Fitted h-exponents of the root terms, when refined numerically.
    pub root_exponents: Option<Vec<f64>>,
}

impl WitnessReport {
    fn from_terms(form: &WitnessForm, t: &WitnessTerms<RealSeries>, root_exponents: Option<Vec<f64>>) -> Self {
        let v = t.value();
        let names = form.term_names();
        let elements = t
            .moduli
            .iter()
            .chain(&t.roots)
            .zip(names)
            .map(|(s, name)| NamedTerm { name, value: s.to_series(), exact_through: s.exact_through })
            .collect();
        let (mut leading_order, mut coef) = (None, 0.0);
        for k in 0..=v.exact_through as usize {
            if v.c[k].abs() > VIOLATION_TOL {
                leading_order = Some(k);
                coef = v.c[k];
                break;
            }
        }
        Self {
            witness: form.kind,
            value: v.to_series(),
            exact_through: v.exact_through,
            leading_order,
            leading_coefficient: coef,
            violated: coef > VIOLATION_TOL,
            inconclusive: leading_order.is_none(),
            elements,
            root_exponents,
        }
    }
}

pub fn witness(kind: WitnessKind, rho: &DensityMatrixP) -> Result<WitnessReport> {
    let form = WitnessForm::of(kind);
    let t = form.evaluate(rho)?;
    Ok(WitnessReport::from_terms(&form, &t, None))
}

pub fn witness_a1(rho: &DensityMatrixP) -> Result<WitnessReport> {
    witness(WitnessKind::A1, rho)
}

pub fn witness_a2(rho: &DensityMatrixP) -> Result<WitnessReport> {
    witness(WitnessKind::A2, rho)
}

/// Series evaluation only; roots whose leading order is h² under the sign
/// are not resolved. See [`witness_refined`].
pub fn witness_a3(rho: &DensityMatrixP) -> Result<WitnessReport> {
    witness(WitnessKind::A3, rho)
}

pub fn witness_a4(rho: &DensityMatrixP) -> Result<WitnessReport> {
    witness(WitnessKind::A4, rho)
}

/// Local power-law exponent of `f` between the first and last sample.
pub fn fit_exponent(hs: &[f64], f: &[f64]) -> f64 {
    let (h0, h1) = (hs[0], hs[hs.len() - 1]);
    let (f0, f1) = (f[0].abs(), f[f.len() - 1].abs());
    if f0 == 0.0 && f1 == 0.0 {
        return f64::INFINITY;
    }
    (f0 / f1).ln() / (h0 / h1).ln()
}

/// Series evaluation plus numeric h-scaling of the root terms. A root whose
/// series is inexact but which scales faster than h^(exact order + ½) on the
/// untruncated samples is taken to vanish through h²; the value's
/// exactness is upgraded accordingly.
pub fn witness_refined(kind: WitnessKind, rho: &DensityMatrixP, samples: &[(f64, NumericDensity)]) -> Result<WitnessReport> {
    if samples.len() < 2 {
        return Err(Error::InvalidConfig("root refinement needs at least two h samples".into()));
    }
    let form = WitnessForm::of(kind);
    let mut t = form.evaluate(rho)?;
    let hs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let numeric: Vec<WitnessTerms<f64>> = samples.iter().map(|(_, d)| form.evaluate(d)).collect::<Result<_>>()?;
    let mut exps = Vec::with_capacity(t.roots.len());
    for (i, r) in t.roots.iter_mut().enumerate() {
        let f: Vec<f64> = numeric.iter().map(|n| n.roots[i]).collect();
        let p = fit_exponent(&hs, &f);
        exps.push(p);
        if r.exact_through < 2 && r.c.iter().all(|&c| c == 0.0) && p > 2.5 {
            *r = RealSeries::zero();
        }
    }
    Ok(WitnessReport::from_terms(&form, &t, Some(exps)))
}

fn partial_transpose(m: &DMatrix<C64>, dims: &[usize], side: &[usize]) -> DMatrix<C64> {
    let d = m.nrows();
    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        let a = unflatten(dims, i);
        for j in 0..d {
            let b = unflatten(dims, j);
            let (mut a2, mut b2) = (a.clone(), b.clone());
            for &s in side {
                a2[s] = b[s];
                b2[s] = a[s];
            }
            out[(i, j)] = m[(flat_index(dims, &a2), flat_index(dims, &b2))];
        }
    }
    out
}

fn check_side(side: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    for &s in side {
        if s >= n || std::mem::replace(&mut seen[s], true) {
            return Err(Error::Descriptor(format!("bad bipartition side {side:?} for {n} parties")));
        }
    }
    if side.is_empty() || side.len() == n {
        return Err(Error::Descriptor("bipartition side must be a non-empty proper subset".into()));
    }
    Ok(())
}

/// 𝒩 = Σ(|λ| − λ)/2 over the eigenvalues of the partial transpose on `side`.
pub fn negativity_numeric(rho: &NumericDensity, side: &[usize]) -> Result<f64> {
    check_side(side, rho.dims.len())?;
    let scale = crate::bogoliubov::max_abs(&rho.matrix).max(1.0);
    let defect = rho.hermiticity_defect();
    if defect > 1e-10 * scale {
        return Err(Error::NotHermitian(defect));
    }
    let pt = partial_transpose(&rho.matrix, &rho.dims, side);
    let pt = (&pt + pt.adjoint()) * C64::new(0.5, 0.0);
    let ev = SymmetricEigen::new(pt).eigenvalues;
    Ok(ev.iter().map(|&l| (l.abs() - l) / 2.0).sum())
}

pub fn negativity(rho: &DensityMatrixP, side: &[usize], h: f64) -> Result<f64> {
    negativity_numeric(&rho.numeric(h), side)
}

fn coeff_matrix(rho: &DensityMatrixP, k: usize) -> DMatrix<C64> {
    let dims = rho.dims();
    let d: usize = dims.iter().product();
    let mut m = DMatrix::zeros(d, d);
    for ((r, c), v) in &rho.entries {
        m[(flat_index(&dims, r), flat_index(&dims, c))] = v.coeff(k);
    }
    m
}

/// Negativity through first order, 𝒩 = n0 + n1·h, by degenerate
/// perturbation theory of the partially transposed series.
pub fn negativity_first_order(rho: &DensityMatrixP, side: &[usize]) -> Result<(f64, f64)> {
    let dims = rho.dims();
    check_side(side, dims.len())?;
    let defect = rho.hermiticity_defect();
    if defect > 1e-10 {
        return Err(Error::NotHermitian(defect));
    }
    let t0 = partial_transpose(&coeff_matrix(rho, 0), &dims, side);
    let t1 = partial_transpose(&coeff_matrix(rho, 1), &dims, side);
    let t1 = (&t1 + t1.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new((&t0 + t0.adjoint()) * C64::new(0.5, 0.0));
    let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    const TOL: f64 = 1e-9;
    let (mut n0, mut n1) = (0.0, 0.0);
    let mut i = 0;
    while i < idx.len() {
        let lam = eig.eigenvalues[idx[i]];
        let mut j = i;
        while j < idx.len() && (eig.eigenvalues[idx[j]] - lam).abs() < TOL {
            j += 1;
        }
        if lam < TOL {
            let cols: Vec<_> = idx[i..j].iter().map(|&k| eig.eigenvectors.column(k).into_owned()).collect();
            let p = DMatrix::from_columns(&cols);
            let block = p.adjoint() * &t1 * &p;
            if lam < -TOL {
                n0 -= lam * (j - i) as f64;
                n1 -= block.trace().re;
            } else {
                let mu = SymmetricEigen::new((&block + block.adjoint()) * C64::new(0.5, 0.0)).eigenvalues;
                n1 += mu.iter().filter(|&&m| m < 0.0).map(|m| -m).sum::<f64>();
            }
        }
        i = j;
    }
    Ok((n0, n1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CanonicalKind {
    Dicke4,
    W3,
}

/// Signs in the Dicke expansion: `pm` for the two single-pair terms, `quad`
/// for the four-excitation term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DickeSigns {
    pub pm: f64,
    pub quad: f64,
}

impl DickeSigns {
    /// As printed.
    pub fn printed(pm: f64) -> Self {
        Self { pm, quad: -1.0 }
    }

    /// As obtained from the product of the two initial pair states.
    pub fn from_initial_state(pm: f64) -> Self {
        Self { pm, quad: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalState {
    pub kind: CanonicalKind,
    pub state: FockStateP,
}

/// Σ coef · (creation string)|0⟩ on the restriction of `layout` to
/// `parties`, factors reordered to `parties`.
fn from_strings(layout: &Layout, parties: &[Slot], terms: &[(OrderSeries, Vec<Slot>)]) -> Result<FockStateP> {
    let (sub, _, perm) = layout.restrict(parties)?;
    let vac = FockStateP::vacuum(&sub);
    let mut s = FockStateP::zero(&sub);
    for (c, ops) in terms {
        let idx: Vec<usize> = ops.iter().map(|&o| sub.slot(o)).collect::<Result<_>>()?;
        s.add_scaled(&vac.create_string(&idx)?, *c);
    }
    s.prune();
    s.permuted(&perm)
}

/// Dicke state on (A, κ, κ′, C), written in the fermion order of `layout`.
pub fn dicke4(map: &BogoMap, k: i32, kp: i32, signs: DickeSigns, layout: &Layout) -> Result<CanonicalState> {
    map.as_fermion()?;
    let (gk, gkp) = (map.g_of(k)?, map.g_of(kp)?);
    let a_kkp = map.kernel_of(k, kp)?;
    let half = C64::new(0.5, 0.0);
    let (a, rk, rkp, c) = (Slot::A, Slot::Rob(k), Slot::Rob(kp), Slot::C);
    let terms = vec![
        (OrderSeries::constant(half), vec![]),
        (OrderSeries::constant(half * signs.pm * gk.conj()), vec![a, rk]),
        (OrderSeries::constant(half * signs.pm * gkp), vec![rkp, c]),
        (OrderSeries::linear(half * gkp * a_kkp.conj()), vec![rk, rkp]),
        (OrderSeries::linear(-half * gk.conj() * a_kkp), vec![a, c]),
        (OrderSeries::constant(half * signs.quad * gk.conj() * gkp), vec![a, rk, rkp, c]),
    ];
    let state = from_strings(layout, &[a, rk, rkp, c], &terms)?;
    Ok(CanonicalState { kind: CanonicalKind::Dicke4, state })
}

/// W state on (κ, κ′, κ″), normalized through h².
pub fn w3(map: &BogoMap, k: i32, kp: i32, kpp: i32, layout: &Layout) -> Result<CanonicalState> {
    map.as_fermion()?;
    let g = map.g_of(kpp)?;
    let a = g * map.kernel_of(kp, kpp)?.conj();
    let b = g * map.kernel_of(k, kpp)?.conj();
    let n = OrderSeries::real(1.0, 0.0, -0.5 * (a.norm_sqr() + b.norm_sqr()));
    let (rk, rkp, rkpp) = (Slot::Rob(k), Slot::Rob(kp), Slot::Rob(kpp));
    let terms = vec![
        (n, vec![]),
        (n * OrderSeries::linear(a), vec![rkp, rkpp]),
        (n * OrderSeries::linear(b), vec![rk, rkpp]),
    ];
    let state = from_strings(layout, &[rk, rkp, rkpp], &terms)?;
    Ok(CanonicalState { kind: CanonicalKind::W3, state })
}

/// Canonical state in the forward fermion order.
pub fn canonical_state(kind: CanonicalKind, map: &BogoMap, modes: &[i32], signs: DickeSigns) -> Result<CanonicalState> {
    let fwd = FermionOrder::Forward;
    match (kind, modes) {
        (CanonicalKind::Dicke4, &[k, kp]) => dicke4(map, k, kp, signs, &Layout::multi_cavity(Statistics::Fermionic, map.basis(), fwd)),
        (CanonicalKind::W3, &[k, kp, kpp]) => w3(map, k, kp, kpp, &Layout::single_cavity(Statistics::Fermionic, map.basis(), fwd)),
        _ => Err(Error::InvalidModes(format!("{kind:?} with modes {modes:?}"))),
    }
}

fn check_match(dims: &[usize], psi: &FockStateP) -> Result<()> {
    let pd: Vec<usize> = psi.subsystems.iter().map(|s| s.dim).collect();
    if dims != pd.as_slice() {
        return Err(Error::Dimension(format!("state dims {pd:?} vs density dims {dims:?}")));
    }
    Ok(())
}

/// ⟨ψ|ρ|ψ⟩
pub fn fidelity(rho: &DensityMatrixP, psi: &CanonicalState) -> Result<OrderSeries> {
    check_match(&rho.dims(), &psi.state)?;
    let mut f = OrderSeries::ZERO;
    for ((r, c), v) in &rho.entries {
        f += psi.state.amplitude(r).conj() * *v * psi.state.amplitude(c);
    }
    Ok(f)
}

/// ⟨ψ(h)|ρ|ψ(h)⟩ with ψ evaluated and normalized at h.
pub fn fidelity_numeric(rho: &NumericDensity, psi: &CanonicalState, h: f64) -> Result<f64> {
    check_match(&rho.dims, &psi.state)?;
    let d = rho.matrix.nrows();
    let mut v = nalgebra::DVector::<C64>::zeros(d);
    for (o, a) in &psi.state.terms {
        v[flat_index(&rho.dims, o)] = a.eval(h);
    }
    let n = v.norm();
    v /= C64::new(n, 0.0);
    Ok((v.adjoint() * &rho.matrix * &v)[(0, 0)].re)
}

/// Seeded sampler of bi-separable states: pure products across a random
/// bipartition, or convex mixtures of up to eight of them.
pub struct BiseparableSampler {
    dims: Vec<usize>,
    rng: ChaCha8Rng,
}

impl BiseparableSampler {
    pub fn new(dims: Vec<usize>, seed: u64) -> Self {
        Self { dims, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    fn random_vector(&mut self, d: usize) -> Vec<C64> {
        let mut v: Vec<C64> = (0..d).map(|_| C64::new(self.rng.gen_range(-1.0..1.0), self.rng.gen_range(-1.0..1.0))).collect();
        // sparse supports reach the witness boundary more often
        if self.rng.gen_bool(0.5) {
            for z in v.iter_mut() {
                if self.rng.gen_bool(0.5) {
                    *z = C64::new(0.0, 0.0);
                }
            }
            let i = self.rng.gen_range(0..d);
            if v.iter().all(|z| z.norm() == 0.0) {
                v[i] = C64::new(1.0, 0.0);
            }
        }
        let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        v.iter().map(|z| z / n).collect()
    }

    pub fn pure_product(&mut self) -> DMatrix<C64> {
        let n = self.dims.len();
        let mask = self.rng.gen_range(1..(1u32 << n) - 1);
        let side: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let rest: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 0).collect();
        let ds: Vec<usize> = side.iter().map(|&i| self.dims[i]).collect();
        let dr: Vec<usize> = rest.iter().map(|&i| self.dims[i]).collect();
        let a = self.random_vector(ds.iter().product());
        let b = self.random_vector(dr.iter().product());
        let d: usize = self.dims.iter().product();
        let psi = nalgebra::DVector::from_fn(d, |i, _| {
            let o = unflatten(&self.dims, i);
            let os: Vec<u8> = side.iter().map(|&k| o[k]).collect();
            let or: Vec<u8> = rest.iter().map(|&k| o[k]).collect();
            a[flat_index(&ds, &os)] * b[flat_index(&dr, &or)]
        });
        &psi * psi.adjoint()
    }

    pub fn sample(&mut self) -> NumericDensity {
        let k = if self.rng.gen_bool(0.5) { 1 } else { self.rng.gen_range(2..=8) };
        let d: usize = self.dims.iter().product();
        let mut m = DMatrix::zeros(d, d);
        let w: Vec<f64> = (0..k).map(|_| self.rng.gen_range(0.0..1.0f64) + 1e-3).collect();
        let total: f64 = w.iter().sum();
        for wi in w {
            m += self.pure_product() * C64::new(wi / total, 0.0);
        }
        NumericDensity { dims: self.dims.clone(), matrix: m }
    }
}

/// Largest witness value over `n` seeded bi-separable samples.
pub fn max_over_biseparable(kind: WitnessKind, n: usize, seed: u64) -> Result<f64> {
    let form = WitnessForm::of(kind);
    let mut s = BiseparableSampler::new(form.dims.clone(), seed);
    let mut best = f64::NEG_INFINITY;
    for _ in 0..n {
        best = best.max(form.evaluate(&s.sample())?.value());
    }
    Ok(best)
}
