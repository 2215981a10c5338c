//! Cavity configuration, mode bases and piecewise trajectories.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    ScalarMassless,
    DiracMassless,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistics {
    Bosonic,
    Fermionic,
}

impl FieldKind {
    pub fn statistics(self) -> Statistics {
        match self {
            FieldKind::ScalarMassless => Statistics::Bosonic,
            FieldKind::DiracMassless => Statistics::Fermionic,
        }
    }
}

impl Statistics {
    pub fn field(self) -> FieldKind {
        match self {
            Statistics::Bosonic => FieldKind::ScalarMassless,
            Statistics::Fermionic => FieldKind::DiracMassless,
        }
    }
}

/// Sign of the free-evolution phases. `Conjugate` flips every phase; all
/// observables must be blind to the choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    #[default]
    Positive,
    Conjugate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityConfig {
    pub delta: f64,
    pub field: FieldKind,
    pub n_max: usize,
    #[serde(default)]
    pub phase_convention: PhaseConvention,
}

impl CavityConfig {
    pub fn new(delta: f64, field: FieldKind, n_max: usize) -> Result<Self> {
        let cfg = Self { delta, field, n_max, phase_convention: PhaseConvention::Positive };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn scalar(n_max: usize) -> Result<Self> {
        Self::new(1.0, FieldKind::ScalarMassless, n_max)
    }

    pub fn dirac(n_max: usize) -> Result<Self> {
        Self::new(1.0, FieldKind::DiracMassless, n_max)
    }

    pub fn with_convention(mut self, c: PhaseConvention) -> Self {
        self.phase_convention = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::InvalidConfig(format!("delta must be positive, got {}", self.delta)));
        }
        if self.n_max < 3 {
            return Err(Error::InvalidConfig(format!("n_max must be at least 3, got {}", self.n_max)));
        }
        if self.n_max > 4096 {
            return Err(Error::InvalidConfig(format!("n_max = {} is unreasonably large", self.n_max)));
        }
        Ok(())
    }

    pub fn basis(&self) -> ModeBasis {
        ModeBasis::new(self.field, self.n_max, self.delta)
    }

    /// Scenario modes must keep two labels of headroom below the truncation.
    pub fn check_interior(&self, label: i32) -> Result<()> {
        let lim = self.n_max as i32 - 2;
        let ok = match self.field {
            FieldKind::ScalarMassless => (1..=lim).contains(&label),
            FieldKind::DiracMassless => label.abs() <= lim,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::NonInteriorMode { label, n_max: self.n_max })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeBasis {
    pub field: FieldKind,
    pub labels: Vec<i32>,
    /// ω_n = nπ/δ, signed for Dirac antiparticle labels.
    pub frequencies: Vec<f64>,
}

impl ModeBasis {
    pub fn new(field: FieldKind, n_max: usize, delta: f64) -> Self {
        let n = n_max as i32;
        let labels: Vec<i32> = match field {
            FieldKind::ScalarMassless => (1..=n).collect(),
            FieldKind::DiracMassless => (-n..=n).collect(),
        };
        let frequencies = labels.iter().map(|&l| l as f64 * PI / delta).collect();
        Self { field, labels, frequencies }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: i32) -> Option<usize> {
        let first = *self.labels.first()?;
        let i = label.checked_sub(first)?;
        (i >= 0 && (i as usize) < self.labels.len()).then_some(i as usize)
    }

    pub fn index(&self, label: i32) -> Result<usize> {
        self.index_of(label).ok_or_else(|| Error::InvalidModes(format!("label {label} not in basis")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SegmentKind {
    Inertial,
    Accelerated { h: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    #[serde(flatten)]
    pub kind: SegmentKind,
    pub duration: f64,
}

pub fn check_h(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 && h < 2.0 {
        Ok(())
    } else {
        Err(Error::HOutOfRange(h))
    }
}

impl Segment {
    pub fn inertial(duration: f64) -> Result<Self> {
        let s = Self { kind: SegmentKind::Inertial, duration };
        s.validate()?;
        Ok(s)
    }

    pub fn accelerated(h: f64, duration: f64) -> Result<Self> {
        let s = Self { kind: SegmentKind::Accelerated { h }, duration };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::InvalidSegment(format!("duration must be positive, got {}", self.duration)));
        }
        if let SegmentKind::Accelerated { h } = self.kind {
            check_h(h)?;
        }
        Ok(())
    }

    pub fn h(&self) -> Option<f64> {
        match self.kind {
            SegmentKind::Inertial => None,
            SegmentKind::Accelerated { h } => Some(h),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub segments: Vec<Segment>,
}

impl Trajectory {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        for s in &segments {
            s.validate()?;
        }
        Ok(Self { segments })
    }

    /// A single switch into uniform acceleration with no elapsed time in
    /// either frame is not a trajectory; use `bogoliubov::switch_map` for it.
    pub fn empty() -> Self {
        Self::default()
    }

    /// `n` repetitions of [accelerated(h, τ/2), inertial(τ/2)].
    pub fn blocks(h: f64, tau: f64, n: usize) -> Result<Self> {
        let acc = Segment::accelerated(h, tau / 2.0)?;
        let ine = Segment::inertial(tau / 2.0)?;
        Ok(Self { segments: (0..n).flat_map(|_| [acc, ine]).collect() })
    }

    /// Adjacent segments of the same kind and h fused into one.
    pub fn merged(&self) -> Self {
        let mut out: Vec<Segment> = Vec::with_capacity(self.segments.len());
        for s in &self.segments {
            match out.last_mut() {
                Some(last) if last.kind == s.kind => last.duration += s.duration,
                _ => out.push(*s),
            }
        }
        Self { segments: out }
    }

    pub fn accelerated_count(&self) -> usize {
        self.merged().segments.iter().filter(|s| s.h().is_some()).count()
    }

    pub fn max_h(&self) -> f64 {
        self.segments.iter().filter_map(Segment::h).fold(0.0, f64::max)
    }
}

pub fn block_u(h: f64, tau: f64, delta: f64) -> Result<f64> {
    check_h(h)?;
    if !(tau > 0.0 && delta > 0.0) {
        return Err(Error::InvalidSegment(format!("need tau > 0 and delta > 0, got {tau}, {delta}")));
    }
    Ok(h * tau / (4.0 * delta * (h / 2.0).atanh()))
}

/// Inverse of [`block_u`] in τ.
pub fn tau_from_u(h: f64, u: f64, delta: f64) -> Result<f64> {
    check_h(h)?;
    Ok(4.0 * delta * (h / 2.0).atanh() * u / h)
}
