use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument out of supported range in {op}: {msg}")]
    Range { op: &'static str, msg: String },

    #[error("non-finite result in {0}")]
    Overflow(&'static str),

    #[error("{0} is not implemented for this variant")]
    NotImplemented(&'static str),

    #[error("transform evaluated to a non-finite value at s = {abscissa}")]
    Inversion { abscissa: f64 },

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("stationarity required (gamma = kappa - eta*mu = {gamma} must be > 0)")]
    Stationarity { gamma: f64 },

    #[error("integration did not reach tolerance: {0}")]
    Integration(String),

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("index mismatch: {0}")]
    IndexMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),
}

impl Error {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Domain { op, msg: msg.into() }
    }

    pub(crate) fn range(op: &'static str, msg: impl Into<String>) -> Self {
        Error::Range { op, msg: msg.into() }
    }
}
