use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("too few users to split: {0} (need at least 4)")]
    TooFewUsers(usize),
    #[error("{what} index {index} out of range (size {size})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        size: usize,
    },
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("training diverged at epoch {epoch}: loss {loss} (initial {initial})")]
    Divergence { epoch: usize, loss: f64, initial: f64 },
    #[error("model mode error: {0}")]
    Mode(String),
    #[error("predictor cannot serve this protocol: {0}")]
    Capability(String),
    #[error("no data to aggregate: {0}")]
    NoData(&'static str),
    #[error("requested {requested} items but only {available} exist")]
    Range { requested: usize, available: usize },
    #[error("insufficient data: {0}")]
    Insufficient(String),
    #[error("item catalogue too large for item-knn: {0} items (limit {1})")]
    TooManyItems(usize, usize),
    #[error("model file format: {0}")]
    Format(String),
    #[error("model file version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, size: usize) -> Result<()> {
    if index < size {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, size })
    }
}
