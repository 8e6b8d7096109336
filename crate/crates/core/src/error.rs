use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("unknown mode label `{0}` (expected plus, minus or mech)")]
    UnknownMode(String),

    #[error("occupation {0:?} is outside the retained basis")]
    OutsideBasis([usize; 3]),

    #[error("operands live on different Hilbert spaces")]
    SpaceMismatch,

    #[error("matrix has weight {0:.3e} outside the Liouvillian's coherence sector")]
    SectorLeak(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ramp schedule is not monotone: {0}")]
    NonMonotonicRamp(String),

    #[error("invalid time grid: {0}")]
    InvalidTimes(String),

    #[error("degenerate steady state: {count} eigenvalues within {tol:.1e} of zero; restrict to a symmetry block")]
    DegenerateSteadyState { count: usize, tol: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("linear algebra failure in {op}: {msg}")]
    Linalg { op: &'static str, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn linalg(op: &'static str, err: impl std::fmt::Display) -> Self {
        Error::Linalg { op, msg: err.to_string() }
    }
}
