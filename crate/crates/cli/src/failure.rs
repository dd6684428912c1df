use thiserror::Error;

/// Why a run stopped before reaching its gates.
#[derive(Debug, Error)]
pub enum Failure {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure in {op}: {source}")]
    Numeric {
        op: &'static str,
        #[source]
        source: tfhp::Error,
    },
    #[error("cannot write {path}: {msg}")]
    Output { path: String, msg: String },
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Numeric { .. } | Failure::Output { .. } => 3,
        }
    }
}

/// Tags a core error with the operation that raised it; parameter errors count as config errors.
pub trait Named<T> {
    fn op(self, op: &'static str) -> Result<T, Failure>;
}

impl<T> Named<T> for tfhp::Result<T> {
    fn op(self, op: &'static str) -> Result<T, Failure> {
        self.map_err(|source| match source {
            tfhp::Error::InvalidParameter(_) | tfhp::Error::Stationarity { .. } => Failure::Config(format!("{op}: {source}")),
            source => Failure::Numeric { op, source },
        })
    }
}
