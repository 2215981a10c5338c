//! Perturbative Fock states over a fixed slot layout, the first-order state
//! transformation series, vacuum kernels, density matrices and partial traces.
//!
//! Fermionic basis vectors are occupation tuples read as creation strings in
//! slot order, `O†_{s1} O†_{s2} … |0⟩` with s1 < s2 < …; permutation signs are
//! folded into amplitudes.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{max_abs, BogoMap, FullMap};
use crate::error::{Error, Result};
use crate::geometry::{ModeBasis, Statistics};
use crate::series::{OrderSeries, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FermionOrder {
    /// A, particles ascending, antiparticles by ascending |label|, C
    #[default]
    Forward,
    Reversed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Slot {
    A,
    C,
    Rob(i32),
}

impl Slot {
    pub fn name(&self) -> String {
        match self {
            Slot::A => "A".into(),
            Slot::C => "C".into(),
            Slot::Rob(l) => format!("R{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsystem {
    pub name: String,
    pub dim: usize,
}

/// Ordered single-mode factors of a Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub statistics: Statistics,
    pub slots: Vec<Slot>,
    pub dims: Vec<usize>,
}

/// Occupation cap for bosonic cavity modes; the first-order transforms and
/// the second-order vacuum never put more than two quanta in one mode.
pub const BOSON_MODE_DIM: usize = 3;

fn rob_order(basis: &ModeBasis) -> Vec<i32> {
    let mut v: Vec<i32> = basis.labels.iter().copied().filter(|&l| l >= 0).collect();
    v.extend(basis.labels.iter().rev().copied().filter(|&l| l < 0));
    v
}

impl Layout {
    pub fn new(statistics: Statistics, slots: Vec<Slot>, dims: Vec<usize>) -> Result<Self> {
        if slots.len() != dims.len() || slots.is_empty() {
            return Err(Error::Descriptor("slots and dims must be non-empty and of equal length".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (s, &d) in slots.iter().zip(&dims) {
            if !seen.insert(*s) {
                return Err(Error::Descriptor(format!("slot {} appears twice", s.name())));
            }
            if d < 2 || (statistics == Statistics::Fermionic && d != 2) || d > 255 {
                return Err(Error::Descriptor(format!("bad local dimension {d} for {}", s.name())));
            }
        }
        Ok(Self { statistics, slots, dims })
    }

    fn build(statistics: Statistics, basis: &ModeBasis, spectators: bool, order: FermionOrder) -> Self {
        let rob_dim = match statistics {
            Statistics::Bosonic => BOSON_MODE_DIM,
            Statistics::Fermionic => 2,
        };
        let mut slots = Vec::new();
        let mut dims = Vec::new();
        if spectators {
            slots.push(Slot::A);
            dims.push(2);
        }
        for l in rob_order(basis) {
            slots.push(Slot::Rob(l));
            dims.push(rob_dim);
        }
        if spectators {
            slots.push(Slot::C);
            dims.push(2);
        }
        if order == FermionOrder::Reversed {
            slots.reverse();
            dims.reverse();
        }
        Self { statistics, slots, dims }
    }

    /// Rob's cavity alone.
    pub fn single_cavity(statistics: Statistics, basis: &ModeBasis, order: FermionOrder) -> Self {
        Self::build(statistics, basis, false, order)
    }

    /// Alice's mode A, Rob's cavity, Charlie's mode C.
    pub fn multi_cavity(statistics: Statistics, basis: &ModeBasis, order: FermionOrder) -> Self {
        Self::build(statistics, basis, true, order)
    }

    pub fn slot(&self, s: Slot) -> Result<usize> {
        self.slots
            .iter()
            .position(|&x| x == s)
            .ok_or_else(|| Error::Descriptor(format!("no slot {}", s.name())))
    }

    pub fn subsystems(&self) -> Vec<Subsystem> {
        self.slots.iter().zip(&self.dims).map(|(s, &dim)| Subsystem { name: s.name(), dim }).collect()
    }

    /// Restriction to `parties`: the sub-layout keeps this layout's relative
    /// slot order. Returns (sub-layout, kept positions here, perm) where
    /// `perm[i]` is the sub-layout position of `parties[i]`.
    pub fn restrict(&self, parties: &[Slot]) -> Result<(Layout, Vec<usize>, Vec<usize>)> {
        let mut keep: Vec<usize> = parties.iter().map(|&p| self.slot(p)).collect::<Result<_>>()?;
        keep.sort_unstable();
        if keep.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Descriptor(format!("repeated party in {parties:?}")));
        }
        let sub = Layout {
            statistics: self.statistics,
            slots: keep.iter().map(|&i| self.slots[i]).collect(),
            dims: keep.iter().map(|&i| self.dims[i]).collect(),
        };
        let perm = parties.iter().map(|&p| sub.slot(p)).collect::<Result<_>>()?;
        Ok((sub, keep, perm))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FockStateP {
    pub statistics: Statistics,
    pub subsystems: Vec<Subsystem>,
    pub terms: BTreeMap<Vec<u8>, OrderSeries>,
}

impl FockStateP {
    pub fn zero(layout: &Layout) -> Self {
        Self { statistics: layout.statistics, subsystems: layout.subsystems(), terms: BTreeMap::new() }
    }

    pub fn vacuum(layout: &Layout) -> Self {
        let mut s = Self::zero(layout);
        s.terms.insert(vec![0; layout.slots.len()], OrderSeries::ONE);
        s
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn amplitude(&self, occ: &[u8]) -> OrderSeries {
        self.terms.get(occ).copied().unwrap_or(OrderSeries::ZERO)
    }

    /// Applies the creation operator of `slot`.
    pub fn create(&self, slot: usize) -> Result<Self> {
        let dim = self
            .subsystems
            .get(slot)
            .ok_or_else(|| Error::Descriptor(format!("slot {slot} out of range")))?
            .dim;
        let mut out = BTreeMap::new();
        for (occ, amp) in &self.terms {
            let n = occ[slot] as usize;
            let factor = match self.statistics {
                Statistics::Bosonic => {
                    if n + 1 >= dim {
                        return Err(Error::Dimension(format!(
                            "occupation {} exceeds local dimension {dim} of {}",
                            n + 1,
                            self.subsystems[slot].name
                        )));
                    }
                    ((n + 1) as f64).sqrt()
                }
                Statistics::Fermionic => {
                    if n == 1 {
                        continue;
                    }
                    let before: u32 = occ[..slot].iter().map(|&x| x as u32).sum();
                    if before.is_multiple_of(2) {
                        1.0
                    } else {
                        -1.0
                    }
                }
            };
            let mut o = occ.clone();
            o[slot] += 1;
            *out.entry(o).or_insert(OrderSeries::ZERO) += amp.scale_re(factor);
        }
        Ok(Self { terms: out, ..self.clone_shell() })
    }

    /// O†_{s1} … O†_{sn} applied to `self` (rightmost first).
    pub fn create_string(&self, slots: &[usize]) -> Result<Self> {
        let mut s = self.clone();
        for &slot in slots.iter().rev() {
            s = s.create(slot)?;
        }
        Ok(s)
    }

    fn clone_shell(&self) -> Self {
        Self { statistics: self.statistics, subsystems: self.subsystems.clone(), terms: BTreeMap::new() }
    }

    pub fn scaled(&self, c: OrderSeries) -> Self {
        let terms = self.terms.iter().map(|(k, v)| (k.clone(), *v * c)).collect();
        Self { terms, ..self.clone_shell() }
    }

    pub fn add_scaled(&mut self, other: &Self, c: OrderSeries) {
        for (k, v) in &other.terms {
            *self.terms.entry(k.clone()).or_insert(OrderSeries::ZERO) += *v * c;
        }
    }

    /// Drops amplitudes that are exactly zero through order 2.
    pub fn prune(&mut self) {
        self.terms.retain(|_, v| !v.is_zero(0.0));
    }

    pub fn norm_sqr(&self) -> OrderSeries {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    /// Reorders tensor factors without any sign; see [`DensityMatrixP::permuted`].
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_perm(perm, self.subsystems.len())?;
        Ok(Self {
            statistics: self.statistics,
            subsystems: perm.iter().map(|&i| self.subsystems[i].clone()).collect(),
            terms: self.terms.iter().map(|(o, v)| (perm.iter().map(|&i| o[i]).collect(), *v)).collect(),
        })
    }
}

/// Pair-creation operator Σ coef · O†_p O†_q, coefficients per unit h.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOperator {
    pub terms: Vec<(usize, usize, C64)>,
}

impl PairOperator {
    /// Applies the operator, attaching one power of h.
    pub fn apply(&self, s: &FockStateP) -> Result<FockStateP> {
        let mut out = s.clone_shell();
        for &(p, q, c) in &self.terms {
            let t = s.create(q)?.create(p)?;
            out.add_scaled(&t, OrderSeries::linear(c));
        }
        out.prune();
        Ok(out)
    }
}

/// Vacuum kernel, first order per unit h, with the normalization to h².
#[derive(Debug, Clone, PartialEq)]
pub struct VacuumKernel {
    pub statistics: Statistics,
    pub labels: Vec<i32>,
    /// V⁽¹⁾ (bosons, symmetric) or 𝒱⁽¹⁾ (fermions, rows p ≥ 0, columns q < 0)
    pub v1: DMatrix<C64>,
    pub norm: OrderSeries,
}

pub fn vacuum_kernel(map: &BogoMap) -> Result<VacuumKernel> {
    let b = map.basis();
    let g = map.g();
    let d = b.len();
    match map {
        BogoMap::Boson(m) => {
            let v1 = DMatrix::from_fn(d, d, |i, j| -(m.beta1[(i, j)] * g[j]).conj());
            let s: f64 = v1.iter().map(|z| z.norm_sqr()).sum();
            Ok(VacuumKernel {
                statistics: Statistics::Bosonic,
                labels: b.labels.clone(),
                v1,
                norm: OrderSeries::real(1.0, 0.0, -0.25 * s),
            })
        }
        BogoMap::Fermion(m) => {
            let l = &b.labels;
            let v1 = DMatrix::from_fn(d, d, |i, j| {
                if l[i] >= 0 && l[j] < 0 {
                    g[j] * m.a1[(i, j)].conj()
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            let s: f64 = v1.iter().map(|z| z.norm_sqr()).sum();
            Ok(VacuumKernel {
                statistics: Statistics::Fermionic,
                labels: b.labels.clone(),
                v1,
                norm: OrderSeries::real(1.0, 0.0, -0.5 * s),
            })
        }
    }
}

/// −β*α⁻¹ on the truncated block of a full bosonic map.
pub fn numeric_vacuum_kernel(full: &FullMap) -> Result<DMatrix<C64>> {
    let FullMap::Boson { alpha, beta } = full else {
        return Err(Error::BasisMismatch("numeric vacuum kernel needs a bosonic map".into()));
    };
    let lu = alpha.clone().lu();
    let u = lu.u();
    let pivot = u.diagonal().iter().map(|z| z.norm()).fold(f64::INFINITY, f64::min);
    if !(pivot > 1e-12) {
        return Err(Error::SingularAlpha(pivot));
    }
    let inv = lu.try_inverse().ok_or(Error::SingularAlpha(pivot))?;
    Ok(-beta.map(|z| z.conj()) * inv)
}

impl VacuumKernel {
    /// W = ½ΣV_ij a†_i a†_j or 𝒲 = Σ𝒱_pq b†_p c†_q on the given layout.
    pub fn pair_operator(&self, layout: &Layout) -> Result<PairOperator> {
        let half = match self.statistics {
            Statistics::Bosonic => 0.5,
            Statistics::Fermionic => 1.0,
        };
        let mut terms = Vec::new();
        for (i, &p) in self.labels.iter().enumerate() {
            for (j, &q) in self.labels.iter().enumerate() {
                let v = self.v1[(i, j)];
                if v != C64::new(0.0, 0.0) {
                    terms.push((layout.slot(Slot::Rob(p))?, layout.slot(Slot::Rob(q))?, v * half));
                }
            }
        }
        Ok(PairOperator { terms })
    }

    /// M(1 + W + W²/2)|0̃⟩, complete through h² for the first-order kernel.
    pub fn vacuum_state(&self, layout: &Layout) -> Result<FockStateP> {
        let w = self.pair_operator(layout)?;
        let vac = FockStateP::vacuum(layout);
        let w1 = w.apply(&vac)?;
        let w2 = w.apply(&w1)?;
        let mut s = vac;
        s.add_scaled(&w1, OrderSeries::ONE);
        s.add_scaled(&w2, OrderSeries::real(0.5, 0.0, 0.0));
        let mut s = s.scaled(self.norm);
        s.prune();
        Ok(s)
    }
}

fn check_interior(basis: &ModeBasis, label: i32) -> Result<()> {
    let n_max = basis.labels.iter().map(|l| l.abs()).max().unwrap_or(0);
    let lo = if basis.labels.first().is_some_and(|&l| l < 0) { -(n_max - 2) } else { 1 };
    if (lo..=n_max - 2).contains(&label) {
        Ok(())
    } else {
        Err(Error::NonInteriorMode { label, n_max: n_max as usize })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BosonInput {
    Vac,
    OneK,
    OneKp,
    PairKKp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FermionInput {
    Vac,
    Particle,
    Antiparticle,
    Pair,
}

struct Series<'a> {
    map: &'a BogoMap,
    layout: &'a Layout,
    w: PairOperator,
}

impl<'a> Series<'a> {
    fn new(map: &'a BogoMap, layout: &'a Layout) -> Result<Self> {
        let w = vacuum_kernel(map)?.pair_operator(layout)?;
        Ok(Self { map, layout, w })
    }

    fn slot(&self, l: i32) -> Result<usize> {
        self.layout.slot(Slot::Rob(l))
    }

    fn g(&self, l: i32) -> Result<C64> {
        self.map.g_of(l)
    }

    /// Σ_m coef(m) O†_m |base⟩ over the labels accepted by `keep`, first order.
    fn scatter(&self, base: &FockStateP, keep: impl Fn(i32) -> bool, coef: impl Fn(usize) -> C64) -> Result<FockStateP> {
        let mut out = base.clone_shell();
        for (i, &m) in self.map.basis().labels.iter().enumerate() {
            let c = coef(i);
            if keep(m) && c != C64::new(0.0, 0.0) {
                out.add_scaled(&base.create(self.slot(m)?)?, OrderSeries::linear(c));
            }
        }
        Ok(out)
    }

    /// (1 + W)|base⟩ scaled by a zeroth-order phase.
    fn dressed(&self, base: &FockStateP, phase: C64) -> Result<FockStateP> {
        let mut s = base.scaled(OrderSeries::constant(phase));
        s.add_scaled(&self.w.apply(base)?, OrderSeries::constant(phase));
        Ok(s)
    }

    fn alpha1(&self, m_idx: usize, label: i32) -> Result<C64> {
        let b = self.map.as_boson()?;
        Ok(b.alpha1[(m_idx, self.map.basis().index(label)?)])
    }

    fn a1(&self, m_idx: usize, label: i32) -> Result<C64> {
        let f = self.map.as_fermion()?;
        Ok(f.a1[(m_idx, self.map.basis().index(label)?)])
    }

    fn boson_vac(&self) -> Result<FockStateP> {
        self.dressed(&FockStateP::vacuum(self.layout), C64::new(1.0, 0.0))
    }

    fn boson_one(&self, k: i32) -> Result<FockStateP> {
        let vac = FockStateP::vacuum(self.layout);
        let one = vac.create(self.slot(k)?)?;
        let mut s = self.dressed(&one, self.g(k)?.conj())?;
        let col: Vec<C64> = (0..self.map.basis().len()).map(|i| self.alpha1(i, k)).collect::<Result<_>>()?;
        s.add_scaled(&self.scatter(&vac, |m| m != k, |i| col[i].conj())?, OrderSeries::ONE);
        s.prune();
        Ok(s)
    }

    fn boson_pair(&self, k: i32, kp: i32) -> Result<FockStateP> {
        let vac = FockStateP::vacuum(self.layout);
        let (sk, skp) = (self.slot(k)?, self.slot(kp)?);
        let (gk, gkp) = (self.g(k)?, self.g(kp)?);
        let both = vac.create(skp)?.create(sk)?;
        let mut s = self.dressed(&both, gk.conj() * gkp.conj())?;
        let beta = self.map.kernel_of(k, kp)?;
        s.add_scaled(&vac, OrderSeries::linear(gk.conj() * beta));
        let n = self.map.basis().len();
        let col_kp: Vec<C64> = (0..n).map(|i| self.alpha1(i, kp)).collect::<Result<_>>()?;
        let col_k: Vec<C64> = (0..n).map(|i| self.alpha1(i, k)).collect::<Result<_>>()?;
        let one_k = vac.create(sk)?;
        let one_kp = vac.create(skp)?;
        s.add_scaled(&self.scatter(&one_k, |m| m != kp, |i| col_kp[i].conj())?, OrderSeries::constant(gk.conj()));
        s.add_scaled(&self.scatter(&one_kp, |m| m != k, |i| col_k[i].conj())?, OrderSeries::constant(gkp.conj()));
        s.prune();
        Ok(s)
    }

    fn fermion_vac(&self) -> Result<FockStateP> {
        self.dressed(&FockStateP::vacuum(self.layout), C64::new(1.0, 0.0))
    }

    fn fermion_particle(&self, k: i32) -> Result<FockStateP> {
        let vac = FockStateP::vacuum(self.layout);
        let one = vac.create(self.slot(k)?)?;
        let mut s = self.dressed(&one, self.g(k)?.conj())?;
        let col: Vec<C64> = (0..self.map.basis().len()).map(|i| self.a1(i, k)).collect::<Result<_>>()?;
        s.add_scaled(&self.scatter(&vac, |m| m >= 0, |i| col[i].conj())?, OrderSeries::ONE);
        s.prune();
        Ok(s)
    }

    fn fermion_antiparticle(&self, kp: i32) -> Result<FockStateP> {
        let vac = FockStateP::vacuum(self.layout);
        let one = vac.create(self.slot(kp)?)?;
        let mut s = self.dressed(&one, self.g(kp)?)?;
        let col: Vec<C64> = (0..self.map.basis().len()).map(|i| self.a1(i, kp)).collect::<Result<_>>()?;
        s.add_scaled(&self.scatter(&vac, |m| m < 0, |i| col[i])?, OrderSeries::ONE);
        s.prune();
        Ok(s)
    }

    /// b†_κ c†_κ′|0⟩
    fn fermion_pair(&self, k: i32, kp: i32) -> Result<FockStateP> {
        let vac = FockStateP::vacuum(self.layout);
        let (sk, skp) = (self.slot(k)?, self.slot(kp)?);
        let (gk, gkp) = (self.g(k)?, self.g(kp)?);
        let both = vac.create_string(&[sk, skp])?;
        let mut s = self.dressed(&both, gkp * gk.conj())?;
        s.add_scaled(&vac, OrderSeries::linear(gkp * self.map.kernel_of(kp, k)?.conj()));
        let n = self.map.basis().len();
        let col_k: Vec<C64> = (0..n).map(|i| self.a1(i, k)).collect::<Result<_>>()?;
        let col_kp: Vec<C64> = (0..n).map(|i| self.a1(i, kp)).collect::<Result<_>>()?;
        // b†_m c†_κ′|0⟩ and b†_κ c†_n|0⟩
        let anti = vac.create(skp)?;
        s.add_scaled(&self.scatter(&anti, |m| m >= 0, |i| col_k[i].conj())?, OrderSeries::constant(gkp));
        let mut tail = vac.clone_shell();
        for (i, &nl) in self.map.basis().labels.iter().enumerate() {
            if nl < 0 && col_kp[i] != C64::new(0.0, 0.0) {
                tail.add_scaled(&vac.create_string(&[sk, self.slot(nl)?])?, OrderSeries::linear(col_kp[i]));
            }
        }
        s.add_scaled(&tail, OrderSeries::constant(gk.conj()));
        s.prune();
        Ok(s)
    }
}

pub fn transform_boson_state(map: &BogoMap, which: BosonInput, k: i32, kp: i32, layout: &Layout) -> Result<FockStateP> {
    map.as_boson()?;
    if k == kp {
        return Err(Error::InvalidModes(format!("k and k' must differ, both are {k}")));
    }
    check_interior(map.basis(), k)?;
    check_interior(map.basis(), kp)?;
    let s = Series::new(map, layout)?;
    match which {
        BosonInput::Vac => s.boson_vac(),
        BosonInput::OneK => s.boson_one(k),
        BosonInput::OneKp => s.boson_one(kp),
        BosonInput::PairKKp => s.boson_pair(k, kp),
    }
}

pub fn transform_fermion_state(map: &BogoMap, which: FermionInput, k: i32, kp: i32, layout: &Layout) -> Result<FockStateP> {
    map.as_fermion()?;
    if k < 0 || kp >= 0 {
        return Err(Error::InvalidModes(format!("need a particle label >= 0 and an antiparticle label < 0, got ({k}, {kp})")));
    }
    check_interior(map.basis(), k)?;
    check_interior(map.basis(), kp)?;
    let s = Series::new(map, layout)?;
    match which {
        FermionInput::Vac => s.fermion_vac(),
        FermionInput::Particle => s.fermion_particle(k),
        FermionInput::Antiparticle => s.fermion_antiparticle(kp),
        FermionInput::Pair => s.fermion_pair(k, kp),
    }
}

/// Creation operator in an in-region state written as an operator string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InOp {
    A,
    C,
    /// a† (bosons) or b† (label ≥ 0) / c† (label < 0) for Rob's mode
    Rob(i32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InTerm {
    pub coef: C64,
    pub ops: Vec<InOp>,
}

/// Transforms Σ coef · (ops)|0⟩ with A and C as spectators: spectator
/// operators are moved to the left of Rob's, Rob's in-region state is
/// replaced by its out-region series, and the spectators are re-applied.
pub fn transform_in_state(map: &BogoMap, terms: &[InTerm], layout: &Layout) -> Result<FockStateP> {
    let fermionic = layout.statistics == Statistics::Fermionic;
    let series = Series::new(map, layout)?;
    let mut out = FockStateP::zero(layout);
    for t in terms {
        let mut spect = Vec::new();
        let mut rob = Vec::new();
        let mut swaps = 0usize;
        for op in &t.ops {
            match op {
                InOp::A | InOp::C => {
                    swaps += rob.len();
                    spect.push(layout.slot(if *op == InOp::A { Slot::A } else { Slot::C })?);
                }
                InOp::Rob(l) => rob.push(*l),
            }
        }
        let mut sign = if fermionic && swaps % 2 == 1 { -1.0 } else { 1.0 };
        let state = match (fermionic, rob.as_slice()) {
            (_, []) => series.boson_vac()?,
            (false, [k]) => series.boson_one(*k)?,
            (false, [k, kp]) if k != kp => series.boson_pair(*k, *kp)?,
            (true, [k]) if *k >= 0 => series.fermion_particle(*k)?,
            (true, [k]) => series.fermion_antiparticle(*k)?,
            (true, [k, kp]) if *k >= 0 && *kp < 0 => series.fermion_pair(*k, *kp)?,
            (true, [kp, k]) if *k >= 0 && *kp < 0 => {
                sign = -sign;
                series.fermion_pair(*k, *kp)?
            }
            _ => return Err(Error::InvalidModes(format!("no transformation series for Rob operators {rob:?}"))),
        };
        let state = state.create_string(&spect)?;
        out.add_scaled(&state, OrderSeries::constant(t.coef * sign));
    }
    out.prune();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrixP {
    pub statistics: Statistics,
    pub subsystems: Vec<Subsystem>,
    #[serde(with = "entry_list")]
    pub entries: BTreeMap<(Vec<u8>, Vec<u8>), OrderSeries>,
}

mod entry_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        row: Vec<u8>,
        col: Vec<u8>,
        value: OrderSeries,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<(Vec<u8>, Vec<u8>), OrderSeries>, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v: Vec<Entry> = m.iter().map(|((r, c), v)| Entry { row: r.clone(), col: c.clone(), value: *v }).collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BTreeMap<(Vec<u8>, Vec<u8>), OrderSeries>, D::Error> {
        let v = Vec::<Entry>::deserialize(d)?;
        Ok(v.into_iter().map(|e| ((e.row, e.col), e.value)).collect())
    }
}

impl DensityMatrixP {
    pub fn dims(&self) -> Vec<usize> {
        self.subsystems.iter().map(|s| s.dim).collect()
    }

    pub fn element(&self, row: &[u8], col: &[u8]) -> OrderSeries {
        self.entries.get(&(row.to_vec(), col.to_vec())).copied().unwrap_or(OrderSeries::ZERO)
    }

    pub fn trace(&self) -> OrderSeries {
        self.entries.iter().filter(|((r, c), _)| r == c).map(|(_, v)| *v).sum()
    }

    /// max over entries and orders of |ρ(a,b) − conj ρ(b,a)|
    pub fn hermiticity_defect(&self) -> f64 {
        self.entries
            .iter()
            .map(|((r, c), v)| v.max_abs_diff(&self.element(c, r).conj()))
            .fold(0.0, f64::max)
    }

    pub fn numeric(&self, h: f64) -> NumericDensity {
        let dims = self.dims();
        let d: usize = dims.iter().product();
        let mut m = DMatrix::zeros(d, d);
        for ((r, c), v) in &self.entries {
            m[(flat_index(&dims, r), flat_index(&dims, c))] += v.eval(h);
        }
        NumericDensity { dims, matrix: m }
    }

    /// Reorders tensor factors without any sign (the tensor-product reading
    /// of the state). `perm[i]` is the old position of new factor i.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_perm(perm, self.subsystems.len())?;
        let p = |o: &Vec<u8>| perm.iter().map(|&i| o[i]).collect::<Vec<u8>>();
        Ok(Self {
            statistics: self.statistics,
            subsystems: perm.iter().map(|&i| self.subsystems[i].clone()).collect(),
            entries: self.entries.iter().map(|((r, c), v)| ((p(r), p(c)), *v)).collect(),
        })
    }
}

fn check_perm(perm: &[usize], n: usize) -> Result<()> {
    let mut seen = vec![false; n];
    if perm.len() != n {
        return Err(Error::Descriptor(format!("permutation of length {} for {n} subsystems", perm.len())));
    }
    for &i in perm {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::Descriptor(format!("invalid permutation {perm:?}")));
        }
    }
    Ok(())
}

pub fn flat_index(dims: &[usize], occ: &[u8]) -> usize {
    dims.iter().zip(occ).fold(0, |acc, (&d, &o)| acc * d + o as usize)
}

pub fn unflatten(dims: &[usize], mut i: usize) -> Vec<u8> {
    let mut occ = vec![0u8; dims.len()];
    for (k, &d) in dims.iter().enumerate().rev() {
        occ[k] = (i % d) as u8;
        i /= d;
    }
    occ
}

/// A density matrix at a fixed numeric h.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericDensity {
    pub dims: Vec<usize>,
    pub matrix: DMatrix<C64>,
}

impl NumericDensity {
    pub fn element(&self, row: &[u8], col: &[u8]) -> C64 {
        self.matrix[(flat_index(&self.dims, row), flat_index(&self.dims, col))]
    }

    pub fn hermiticity_defect(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_perm(perm, self.dims.len())?;
        let dims: Vec<usize> = perm.iter().map(|&i| self.dims[i]).collect();
        let d = self.matrix.nrows();
        let map: Vec<usize> = (0..d)
            .map(|i| {
                let o = unflatten(&self.dims, i);
                let n: Vec<u8> = perm.iter().map(|&k| o[k]).collect();
                flat_index(&dims, &n)
            })
            .collect();
        let mut m = DMatrix::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(map[i], map[j])] = self.matrix[(i, j)];
            }
        }
        Ok(Self { dims, matrix: m })
    }
}

fn check_keep(keep: &[usize], n: usize) -> Result<()> {
    if keep.is_empty() {
        return Err(Error::Descriptor("keep set is empty".into()));
    }
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= n) {
        return Err(Error::Descriptor(format!("keep set {keep:?} must be strictly increasing and < {n}")));
    }
    Ok(())
}

/// Sign acquired by moving every traced, occupied operator to the inside
/// (next to the vacuum) past the kept operators to its right.
fn inside_sign(occ: &[u8], kept: &[bool]) -> f64 {
    let mut kept_after = 0u32;
    let mut parity = 0u32;
    for (o, &k) in occ.iter().zip(kept).rev() {
        if *o == 0 {
            continue;
        }
        if k {
            kept_after += 1;
        } else {
            parity += kept_after;
        }
    }
    if parity.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn split(occ: &[u8], keep: &[usize], kept: &[bool]) -> (Vec<u8>, Vec<u8>) {
    let k = keep.iter().map(|&i| occ[i]).collect();
    let r = occ.iter().zip(kept).filter(|(_, &m)| !m).map(|(o, _)| *o).collect();
    (k, r)
}

pub fn density_from_pure(psi: &FockStateP) -> DensityMatrixP {
    let mut entries = BTreeMap::new();
    for (a, x) in &psi.terms {
        for (b, y) in &psi.terms {
            let v = *x * y.conj();
            if !v.is_zero(0.0) {
                entries.insert((a.clone(), b.clone()), v);
            }
        }
    }
    DensityMatrixP { statistics: psi.statistics, subsystems: psi.subsystems.clone(), entries }
}

/// Groups amplitudes by the traced-out occupation, with inside-trace signs
/// folded in.
type Groups = BTreeMap<Vec<u8>, Vec<(Vec<u8>, OrderSeries)>>;

fn grouped(psi: &FockStateP, keep: &[usize]) -> Result<Groups> {
    check_keep(keep, psi.subsystems.len())?;
    let mut kept = vec![false; psi.subsystems.len()];
    for &k in keep {
        kept[k] = true;
    }
    let fermionic = psi.statistics == Statistics::Fermionic;
    let mut groups: BTreeMap<Vec<u8>, Vec<(Vec<u8>, OrderSeries)>> = BTreeMap::new();
    for (occ, amp) in &psi.terms {
        let (k, r) = split(occ, keep, &kept);
        let s = if fermionic { inside_sign(occ, &kept) } else { 1.0 };
        groups.entry(r).or_default().push((k, amp.scale_re(s)));
    }
    Ok(groups)
}

/// Reduced state of a pure state, without forming the full density matrix.
pub fn reduce_pure(psi: &FockStateP, keep: &[usize]) -> Result<DensityMatrixP> {
    let groups = grouped(psi, keep)?;
    let mut entries: BTreeMap<(Vec<u8>, Vec<u8>), OrderSeries> = BTreeMap::new();
    for g in groups.values() {
        for (a, x) in g {
            for (b, y) in g {
                let v = *x * y.conj();
                if !v.is_zero(0.0) {
                    *entries.entry((a.clone(), b.clone())).or_insert(OrderSeries::ZERO) += v;
                }
            }
        }
    }
    Ok(DensityMatrixP {
        statistics: psi.statistics,
        subsystems: keep.iter().map(|&i| psi.subsystems[i].clone()).collect(),
        entries,
    })
}

/// Reduced state at numeric h, with untruncated products of the amplitudes.
pub fn reduce_pure_numeric(psi: &FockStateP, keep: &[usize], h: f64) -> Result<NumericDensity> {
    let groups = grouped(psi, keep)?;
    let dims: Vec<usize> = keep.iter().map(|&i| psi.subsystems[i].dim).collect();
    let d: usize = dims.iter().product();
    let mut m = DMatrix::zeros(d, d);
    for g in groups.values() {
        let v: Vec<(usize, C64)> = g.iter().map(|(k, a)| (flat_index(&dims, k), a.eval(h))).collect();
        for &(i, x) in &v {
            for &(j, y) in &v {
                m[(i, j)] += x * y.conj();
            }
        }
    }
    Ok(NumericDensity { dims, matrix: m })
}

/// Reduced state on `parties`, factors in the order given.
pub fn reduce_to_parties(psi: &FockStateP, layout: &Layout, parties: &[Slot]) -> Result<DensityMatrixP> {
    let (_, keep, perm) = layout.restrict(parties)?;
    reduce_pure(psi, &keep)?.permuted(&perm)
}

pub fn reduce_to_parties_numeric(psi: &FockStateP, layout: &Layout, parties: &[Slot], h: f64) -> Result<NumericDensity> {
    let (_, keep, perm) = layout.restrict(parties)?;
    reduce_pure_numeric(psi, &keep, h)?.permuted(&perm)
}

/// Partial trace keeping `keep` (strictly increasing subsystem indices).
/// Fermionic traced operators are removed from the inside: for every traced
/// occupied slot p the entry picks up (−1)^(kept occupations after p) from
/// both the ket and the bra.
pub fn partial_trace(rho: &DensityMatrixP, keep: &[usize]) -> Result<DensityMatrixP> {
    let n = rho.subsystems.len();
    check_keep(keep, n)?;
    let mut kept = vec![false; n];
    for &k in keep {
        kept[k] = true;
    }
    let fermionic = rho.statistics == Statistics::Fermionic;
    let mut entries: BTreeMap<(Vec<u8>, Vec<u8>), OrderSeries> = BTreeMap::new();
    for ((r, c), v) in &rho.entries {
        let (rk, rr) = split(r, keep, &kept);
        let (ck, cr) = split(c, keep, &kept);
        if rr != cr {
            continue;
        }
        let s = if fermionic { inside_sign(r, &kept) * inside_sign(c, &kept) } else { 1.0 };
        *entries.entry((rk, ck)).or_insert(OrderSeries::ZERO) += v.scale_re(s);
    }
    entries.retain(|_, v| !v.is_zero(0.0));
    Ok(DensityMatrixP {
        statistics: rho.statistics,
        subsystems: keep.iter().map(|&i| rho.subsystems[i].clone()).collect(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bogoliubov::{compile_trajectory, full_switch_map, switch_map};
    use crate::geometry::{CavityConfig, Trajectory};
    use crate::oracle::{richardson, RICHARDSON_H};
    use proptest::prelude::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn scalar_map(n: usize, tau: f64, blocks: usize) -> BogoMap {
        let cfg = CavityConfig::scalar(n).unwrap();
        compile_trajectory(&cfg, &Trajectory::blocks(0.01, tau, blocks).unwrap(), false).unwrap()
    }

    fn dirac_map(n: usize, tau: f64) -> BogoMap {
        let cfg = CavityConfig::dirac(n).unwrap();
        compile_trajectory(&cfg, &Trajectory::blocks(0.01, tau, 1).unwrap(), false).unwrap()
    }

    fn two_fermions() -> Layout {
        Layout::new(Statistics::Fermionic, vec![Slot::Rob(0), Slot::Rob(1)], vec![2, 2]).unwrap()
    }

    #[test]
    fn fermionic_signs() {
        let l = two_fermions();
        let v = FockStateP::vacuum(&l);
        // b†_1 b†_0|0⟩ = −b†_0 b†_1|0⟩
        let s = v.create_string(&[1, 0]).unwrap();
        assert_eq!(s.amplitude(&[1, 1]), OrderSeries::constant(c(-1.0)));
        assert!(s.create(0).unwrap().is_empty());
    }

    #[test]
    fn boson_ladder_factors() {
        let l = Layout::new(Statistics::Bosonic, vec![Slot::Rob(1)], vec![3]).unwrap();
        let s = FockStateP::vacuum(&l).create(0).unwrap().create(0).unwrap();
        assert!((s.amplitude(&[2]).c0.re - 2f64.sqrt()).abs() < 1e-15);
        assert!(s.create(0).is_err());
    }

    #[test]
    fn inside_trace_example() {
        // Tr_p(b†_κ b†_p|0⟩⟨0|b_p) = b†_κ|0⟩⟨0|, here with κ = slot 0, p = slot 1
        let l = two_fermions();
        let mut rho = DensityMatrixP { statistics: Statistics::Fermionic, subsystems: l.subsystems(), entries: BTreeMap::new() };
        rho.entries.insert((vec![1, 1], vec![0, 1]), OrderSeries::ONE);
        let r = partial_trace(&rho, &[0]).unwrap();
        assert_eq!(r.element(&[1], &[0]), OrderSeries::ONE);
        // same operator string with p listed first: b†_p b†_κ|0⟩ = −b†_κ b†_p|0⟩
        let l2 = Layout::new(Statistics::Fermionic, vec![Slot::Rob(1), Slot::Rob(0)], vec![2, 2]).unwrap();
        let mut rho2 = DensityMatrixP { statistics: Statistics::Fermionic, subsystems: l2.subsystems(), entries: BTreeMap::new() };
        rho2.entries.insert((vec![1, 1], vec![1, 0]), OrderSeries::constant(c(-1.0)));
        let r2 = partial_trace(&rho2, &[1]).unwrap();
        assert_eq!(r2.element(&[1], &[0]), OrderSeries::ONE);
    }

    #[test]
    fn trace_over_nothing_is_identity() {
        let map = scalar_map(6, 1.0, 1);
        let l = Layout::single_cavity(Statistics::Bosonic, map.basis(), FermionOrder::Forward);
        let psi = transform_boson_state(&map, BosonInput::OneK, 1, 2, &l).unwrap();
        let rho = density_from_pure(&psi);
        let all: Vec<usize> = (0..rho.subsystems.len()).collect();
        assert_eq!(partial_trace(&rho, &all).unwrap(), rho);
        assert!(partial_trace(&rho, &[]).is_err());
        assert!(partial_trace(&rho, &[2, 1]).is_err());
    }

    #[test]
    fn h_zero_limits() {
        let cfg = CavityConfig::scalar(6).unwrap();
        let g = crate::bogoliubov::phase_map(&cfg, &crate::geometry::Segment::inertial(0.37).unwrap(), false).unwrap();
        let map = BogoMap::phase_only(&cfg, g.clone());
        let l = Layout::single_cavity(Statistics::Bosonic, map.basis(), FermionOrder::Forward);
        let vac = transform_boson_state(&map, BosonInput::Vac, 1, 2, &l).unwrap();
        assert_eq!(vac, FockStateP::vacuum(&l));
        let one = transform_boson_state(&map, BosonInput::OneK, 1, 2, &l).unwrap();
        assert_eq!(one.terms.len(), 1);
        let occ = FockStateP::vacuum(&l).create(l.slot(Slot::Rob(1)).unwrap()).unwrap();
        let key = occ.terms.keys().next().unwrap();
        assert!((one.amplitude(key).c0 - g[0].conj()).norm() < 1e-15);
        let k = vacuum_kernel(&map).unwrap();
        assert_eq!(max_abs(&k.v1), 0.0);
        assert_eq!(k.norm, OrderSeries::ONE);
    }

    #[test]
    fn pair_vacuum_amplitude_and_norm() {
        let map = scalar_map(7, 0.9, 2);
        let l = Layout::single_cavity(Statistics::Bosonic, map.basis(), FermionOrder::Forward);
        let (k, kp) = (1, 2);
        let psi = transform_boson_state(&map, BosonInput::PairKKp, k, kp, &l).unwrap();
        let want = map.g_of(k).unwrap().conj() * map.kernel_of(k, kp).unwrap();
        let a = psi.amplitude(&vec![0; l.slots.len()]);
        assert!((a.c1 - want).norm() < 1e-15 && a.c0.norm() == 0.0);
        let one = transform_boson_state(&map, BosonInput::OneK, k, kp, &l).unwrap();
        let n = one.norm_sqr();
        assert!((n.c0.re - 1.0).abs() < 1e-14 && n.c1.norm() < 1e-14);
        // c₂ = Σ|first-order amplitudes|² ≥ 0 here; the state is not yet
        // renormalized at second order
        assert!(n.c2.re >= 0.0);
    }

    #[test]
    fn charge_superselection() {
        let map = dirac_map(6, 0.7);
        let l = Layout::single_cavity(Statistics::Fermionic, map.basis(), FermionOrder::Forward);
        let charge = |occ: &Vec<u8>| -> i32 {
            l.slots.iter().zip(occ).map(|(s, &o)| match s {
                Slot::Rob(x) if *x >= 0 => o as i32,
                Slot::Rob(_) => -(o as i32),
                _ => 0,
            }).sum()
        };
        for (which, q) in [(FermionInput::Vac, 0), (FermionInput::Particle, 1), (FermionInput::Antiparticle, -1), (FermionInput::Pair, 0)] {
            let psi = transform_fermion_state(&map, which, 1, -2, &l).unwrap();
            assert!(psi.terms.keys().all(|o| charge(o) == q), "{which:?}");
        }
        assert!(transform_fermion_state(&map, FermionInput::Particle, -1, -2, &l).is_err());
    }

    #[test]
    fn fermion_pair_vacuum_amplitude() {
        let map = dirac_map(6, 0.7);
        let l = Layout::single_cavity(Statistics::Fermionic, map.basis(), FermionOrder::Forward);
        let psi = transform_fermion_state(&map, FermionInput::Pair, 1, -2, &l).unwrap();
        let want = map.g_of(-2).unwrap() * map.kernel_of(-2, 1).unwrap().conj();
        assert!((psi.amplitude(&vec![0; l.slots.len()]).c1 - want).norm() < 1e-15);
    }

    #[test]
    fn fermionic_kernel_support() {
        let map = dirac_map(5, 0.7);
        let k = vacuum_kernel(&map).unwrap();
        let l = &k.labels;
        for i in 0..l.len() {
            for j in 0..l.len() {
                if !(l[i] >= 0 && l[j] < 0) {
                    assert_eq!(k.v1[(i, j)], C64::new(0.0, 0.0));
                }
            }
        }
        let f = map.as_fermion().unwrap();
        let (p, q) = (map.basis().index(2).unwrap(), map.basis().index(-1).unwrap());
        assert!((k.v1[(p, q)] - map.g()[q] * f.a1[(p, q)].conj()).norm() < 1e-16);
    }

    #[test]
    fn bosonic_kernel_symmetric() {
        let k = vacuum_kernel(&scalar_map(8, 1.1, 3)).unwrap();
        assert!(max_abs(&(&k.v1 - k.v1.transpose())) < 1e-14);
    }

    #[test]
    fn kernel_matches_numeric_inverse() {
        let cfg = CavityConfig::scalar(6).unwrap();
        let k = vacuum_kernel(&switch_map(&cfg, 0.01).unwrap()).unwrap();
        // V(h)/h, Richardson-extrapolated, against V⁽¹⁾
        let vs: Vec<DMatrix<C64>> = RICHARDSON_H
            .iter()
            .map(|&h| numeric_vacuum_kernel(&full_switch_map(&cfg, h).unwrap()).unwrap() / C64::new(h, 0.0))
            .collect();
        for i in 0..6 {
            for j in 0..6 {
                let col: Vec<f64> = vs.iter().map(|m| m[(i, j)].re).collect();
                let (v, _) = richardson(&col);
                assert!((v - k.v1[(i, j)].re).abs() < 1e-8, "({i},{j}) {v} vs {}", k.v1[(i, j)].re);
            }
        }
    }

    #[test]
    fn singular_alpha_reported() {
        let z = DMatrix::<C64>::zeros(3, 3);
        let full = FullMap::Boson { alpha: z.clone(), beta: z };
        assert!(matches!(numeric_vacuum_kernel(&full), Err(Error::SingularAlpha(_))));
    }

    #[test]
    fn vacuum_norm_is_one_through_h2() {
        for map in [scalar_map(8, 2.0, 2), dirac_map(6, 2.0)] {
            let l = Layout::single_cavity(map.basis().field.statistics(), map.basis(), FermionOrder::Forward);
            let s = vacuum_kernel(&map).unwrap().vacuum_state(&l).unwrap();
            let n = s.norm_sqr();
            assert!((n.c0.re - 1.0).abs() < 1e-14 && n.c1.norm() < 1e-14 && n.c2.norm() < 1e-14, "{n}");
        }
    }

    fn random_state(stats: Statistics, amps: &[(f64, f64, f64, f64)]) -> FockStateP {
        let dims = vec![2; 4];
        let slots = (0..4).map(Slot::Rob).collect();
        let l = Layout::new(stats, slots, dims.clone()).unwrap();
        let mut s = FockStateP::zero(&l);
        for (i, &(a, b, x, y)) in amps.iter().enumerate() {
            s.terms.insert(unflatten(&dims, i % 16), OrderSeries::new(C64::new(a, b), C64::new(x, y), C64::new(y, a)));
        }
        s
    }

    proptest! {
        #[test]
        fn reduce_pure_equals_partial_trace(
            amps in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..16),
            mask in 1u8..15,
            fermi in any::<bool>(),
        ) {
            let stats = if fermi { Statistics::Fermionic } else { Statistics::Bosonic };
            let psi = random_state(stats, &amps);
            let keep: Vec<usize> = (0..4).filter(|i| mask >> i & 1 == 1).collect();
            let a = reduce_pure(&psi, &keep).unwrap();
            let b = partial_trace(&density_from_pure(&psi), &keep).unwrap();
            let keys: std::collections::BTreeSet<_> = a.entries.keys().chain(b.entries.keys()).cloned().collect();
            for (r, c) in keys {
                prop_assert!(a.element(&r, &c).max_abs_diff(&b.element(&r, &c)) < 1e-12);
            }
            prop_assert!(a.trace().max_abs_diff(&psi.norm_sqr()) < 1e-12);
            prop_assert!(a.hermiticity_defect() < 1e-12);
        }

        #[test]
        fn sequential_trace_matches_one_shot(
            amps in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..16),
        ) {
            let psi = random_state(Statistics::Fermionic, &amps);
            let rho = density_from_pure(&psi);
            let once = partial_trace(&rho, &[1, 3]).unwrap();
            let twice = partial_trace(&partial_trace(&rho, &[0, 1, 3]).unwrap(), &[1, 2]).unwrap();
            for (k, v) in &once.entries {
                prop_assert!(v.max_abs_diff(&twice.element(&k.0, &k.1)) < 1e-12);
            }
        }

        #[test]
        fn numeric_reduction_matches_series(
            amps in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64), 1..16),
            h in 1e-4..1e-2f64,
        ) {
            let psi = random_state(Statistics::Fermionic, &amps);
            let a = reduce_pure(&psi, &[0, 2]).unwrap().numeric(h);
            let b = reduce_pure_numeric(&psi, &[0, 2], h).unwrap();
            // the two differ only by the truncated h³, h⁴ products
            prop_assert!(max_abs(&(&a.matrix - &b.matrix)) < 100.0 * h * h * h);
        }
    }
}
