use std::path::PathBuf;

/// Errors raised anywhere in the modelling pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed farm description: {0}")]
    Parse(#[from] serde_json::Error),

    #[error("invalid farm description: {0}")]
    Validation(String),

    #[error("singular network: {0}")]
    SingularNetwork(String),

    #[error("power flow did not converge after {iterations} iterations (max mismatch {mismatch:.3e} p.u.)")]
    PowerFlowDiverged { iterations: usize, mismatch: f64 },

    #[error("zero terminal voltage at turbine {0}")]
    ZeroVoltage(String),

    #[error("nonphysical trajectory: {0}")]
    Nonphysical(String),

    #[error("singular closure matrix while assembling the farm model")]
    SingularClosure,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("eigenvector matrix is numerically defective (condition estimate {condition:.3e})")]
    Defective { condition: f64 },

    #[error("only {found} oscillatory pairs available, {requested} requested")]
    NotEnoughModes { found: usize, requested: usize },

    #[error("cluster count {requested} exceeds the {points} available modes")]
    TooManyClusters { requested: usize, points: usize },

    #[error("group {0} has no members")]
    EmptyGroup(usize),

    #[error("mode {0} has zero magnitude")]
    ZeroMode(usize),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("missing artifact {0}")]
    MissingArtifact(PathBuf),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
