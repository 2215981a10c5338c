use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("acceleration parameter h = {0} is outside (0, 2)")]
    HOutOfRange(f64),

    #[error("invalid cavity configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("mode {label} is not an interior mode for n_max = {n_max}")]
    NonInteriorMode { label: i32, n_max: usize },

    #[error("invalid mode selection: {0}")]
    InvalidModes(String),

    #[error("mode basis mismatch: {0}")]
    BasisMismatch(String),

    #[error("quadrature did not converge: achieved {achieved:.3e}, requested {requested:.3e}")]
    QuadratureNonConvergence { achieved: f64, requested: f64 },

    #[error("closed-form kernel disagrees with the quadrature oracle at ({m}, {n}): |diff| = {diff:.3e}")]
    OracleDisagreement { m: i32, n: i32, diff: f64 },

    #[error("alpha block is singular on the truncated basis (smallest |pivot| {0:.3e})")]
    SingularAlpha(f64),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("malformed subsystem descriptor: {0}")]
    Descriptor(String),

    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("square root of a series with a bare linear leading term has fractional order")]
    FractionalOrder,

    #[error("series expected to be non-negative has leading coefficient {0:.3e}")]
    NegativeSeries(f64),

    #[error("perturbative regime guard: N*h = {nh} exceeds {limit}")]
    RegimeGuard { nh: f64, limit: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
