use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("magnetic field must be finite and non-negative, got {0}")]
    InvalidField(f64),
    #[error("system size must be even and at least 2, got {0}")]
    InvalidSize(usize),
    #[error("Bogoliubov kernel has a pole at k = {0}")]
    KernelPole(f64),
    #[error("principal-value pole at {0} lies within 1e-12 of an endpoint")]
    PoleAtEndpoint(f64),
    #[error("dense oracle supports L <= {max}, got {got}")]
    OracleTooLarge { got: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("fit failed: {0}")]
    Fit(String),
    #[error("{regime} scaling fit has R² = {r_squared}, below 0.99")]
    RegimeMismatch {
        regime: &'static str,
        r_squared: f64,
    },
    #[error("collapse window holds {0} points, need at least 10")]
    DegenerateWindow(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
