use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Symmetric noise needs pairs whose mirror is also in the training split.
    #[error(
        "not enough mirrored training pairs for symmetric noise: requested alpha {requested}, \
         achievable alpha at most {achievable}"
    )]
    InsufficientMirroredPairs { requested: f64, achievable: f64 },

    #[error("numerical failure{}: {detail}", epoch.map(|e| format!(" at epoch {e}")).unwrap_or_default())]
    NumericalFailure { epoch: Option<usize>, detail: String },

    /// All non-DC Fourier bins vanish, so no dominant frequency exists.
    #[error("degenerate neuron: no non-constant Fourier component")]
    DegenerateNeuron,

    #[error("missing required file {}", .0.display())]
    MissingFile(PathBuf),

    #[error("malformed {what}: {detail}")]
    Parse { what: String, detail: String },

    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(what: impl Into<String>, detail: impl ToString) -> Self {
        Error::Parse { what: what.into(), detail: detail.to_string() }
    }

    /// Attach an epoch to a numerical failure raised below the training loop.
    pub fn at_epoch(self, epoch: usize) -> Self {
        match self {
            Error::NumericalFailure { detail, .. } => {
                Error::NumericalFailure { epoch: Some(epoch), detail }
            }
            other => other,
        }
    }
}
