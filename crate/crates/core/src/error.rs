use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum NtbError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("disjoint tracks: {0} and {1} share no frames")]
    DisjointTracks(u64, u64),

    #[error("patch index {index} out of range for {node_count} nodes")]
    IndexOutOfRange { index: usize, node_count: usize },

    #[error("negative energy unsupported: e({0},{1}) = {2}")]
    NegativeEnergy(usize, usize, f64),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid trajectory {0}: {1}")]
    InvalidTrajectory(u64, String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("degenerate training data: {0}")]
    Degenerate(String),

    #[error("unknown label {0:?}")]
    UnknownLabel(String),

    #[error("{path}: line {line}: {msg}")]
    Parse {
        path: String,
        line: u64,
        msg: String,
    },

    #[error("model format: {0}")]
    Format(String),

    #[error("classifier: {0}")]
    Classifier(String),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = NtbError> = std::result::Result<T, E>;
