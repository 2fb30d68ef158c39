use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid direction: {0}")]
    InvalidDirection(String),

    #[error("incomplete lattice: {0}")]
    IncompleteLattice(String),

    #[error("non-finite sample at line {line}")]
    NonFiniteSample { line: usize },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("direction theta={theta_deg}° outside sampled range [{min_deg}°, {max_deg}°]")]
    OutOfRange {
        theta_deg: f64,
        min_deg: f64,
        max_deg: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("steering vector vanishes at this DoA")]
    VanishingSteeringVector,

    #[error("all candidate steering vectors vanish")]
    AllCandidatesVanish,

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    EigenNonConvergence { sweeps: usize, residual: f64 },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::EigenNonConvergence { .. } | Error::AllCandidatesVanish
        )
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
