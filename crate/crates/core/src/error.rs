use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("signal of {len} samples is shorter than one frame ({frame_len} samples)")]
    EmptySignal { len: usize, frame_len: usize },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("length mismatch: expected {expected} samples, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular parameter: {0}")]
    SingularParameter(String),

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("no speech-active frames in reference signal")]
    NoSpeech,

    #[error("malformed wav file: {0}")]
    WavFormat(String),

    #[error("unsupported wav format: {0}")]
    UnsupportedFormat(String),

    #[error("multichannel wav ({channels} channels) is not supported")]
    Multichannel { channels: u16 },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("duplicate utterance id `{0}`")]
    DuplicateId(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
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

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
