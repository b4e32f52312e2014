use thiserror::Error;

/// Errors raised by fitting, estimation and resampling routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("group has no observations")]
    EmptyGroup,

    #[error("zero risk set")]
    ZeroRiskSet,

    #[error("tau undefined")]
    TauUndefined,

    #[error("no events")]
    NoEvents,

    #[error("separation detected")]
    Separation,

    #[error("singular information matrix")]
    Singular,

    #[error("did not converge after {iterations} iterations")]
    NotConverged {
        iterations: usize,
        coefficients: Vec<f64>,
    },

    #[error("positivity violation: propensity score {0} outside [1e-6, 1 - 1e-6]")]
    Positivity(f64),

    #[error("hazard undefined at zero survival")]
    HazardUndefined,

    #[error("bootstrap unstable: {failed} of {total} replicates failed")]
    BootstrapUnstable { failed: usize, total: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
