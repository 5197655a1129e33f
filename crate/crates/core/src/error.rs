use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("parameter {name} = {value} outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: String,
    },

    #[error("correlation block of size {dim} with rho = {rho} is not positive definite")]
    NotPositiveDefinite { dim: usize, rho: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{sampler} exceeded {cap} shrinkage iterations")]
    SliceCap { sampler: &'static str, cap: usize },

    #[error("chain aborted at iteration {iteration}: {cause}")]
    ChainAbort { iteration: usize, cause: Box<Error> },

    #[error("empty selection: {0}")]
    Empty(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn parse(path: impl AsRef<std::path::Path>, msg: impl ToString) -> Self {
        Error::Parse {
            path: path.as_ref().display().to_string(),
            msg: msg.to_string(),
        }
    }
}
