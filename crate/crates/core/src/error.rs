use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("zadoff-chu pilots exhaust the cyclic-shift set: n_pilot={n_pilot} > n_tx={n_tx}")]
    PilotShiftsExhausted { n_pilot: usize, n_tx: usize },

    #[error("unsupported quantizer bit depth {0} (supported: 1..=8)")]
    UnsupportedBitDepth(u32),

    #[error("{0} is not a codeword of this quantizer")]
    InvalidCodeword(f64),

    #[error("time embedding width must be even, got {0}")]
    OddEmbeddingWidth(usize),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("linear system is numerically singular")]
    SingularSystem,

    #[error("loss became non-finite at {context}")]
    NonFiniteLoss { context: String },

    #[error("posterior iterate became non-finite at step t={t}")]
    NonFiniteIterate { t: usize },

    #[error("NMSE reference vector has zero norm")]
    ZeroNormReference,

    #[error("no valid noise schedule for t_max={0}: beta endpoints leave (0, 1)")]
    BadSchedule(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad container format: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
