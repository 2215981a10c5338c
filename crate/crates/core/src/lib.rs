//! Perturbative Bogoliubov pipeline for cavity field modes under piecewise
//! inertial / uniformly accelerated motion, with Fock-space transforms and
//! genuine multipartite entanglement witnesses.

pub mod bogoliubov;
pub mod entanglement;
pub mod error;
pub mod fock;
pub mod geometry;
pub mod oracle;
pub mod scenarios;
pub mod series;

pub use error::{Error, Result};
pub use geometry::{block_u, CavityConfig, FieldKind, ModeBasis, PhaseConvention, Segment, SegmentKind, Statistics, Trajectory};
pub use series::{series_mul, OrderSeries, RealSeries, C64};
