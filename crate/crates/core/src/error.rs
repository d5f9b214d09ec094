use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid node pair ({i}, {j}) for a graph with {n} nodes")]
    Index { i: usize, j: usize, n: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("timestep {t} outside the valid range {min}..={max}")]
    StepOutOfRange { t: usize, min: usize, max: usize },

    #[error("cumulative flip probability reaches 1/2 at intermediate step {t}")]
    SingularStep { t: usize },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("node count mismatch: expected {expected}, got {got}")]
    NodeCountMismatch { expected: usize, got: usize },

    #[error("non-finite value in {layer}")]
    NonFinite { layer: String },

    #[error("divergence: {0}")]
    Overflow(String),

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged {
        epoch: usize,
        loss: f64,
        last_good: Box<crate::training::TrainState>,
    },

    #[error("schedule mismatch: {0}")]
    ScheduleMismatch(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
