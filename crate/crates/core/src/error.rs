use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, TsdError>;

#[derive(Debug, Error)]
pub enum TsdError {
    #[error("empty waveform")]
    EmptyWaveform,

    #[error("too short: {samples} samples, need at least one hop of {hop}")]
    TooShort { samples: usize, hop: usize },

    #[error("clip too short for encoder: {frames} spectrogram frames, downsample factor {factor}")]
    ClipTooShort { frames: usize, factor: usize },

    #[error("dimension mismatch in {stream}: expected {expected}, got {got}")]
    DimensionMismatch {
        stream: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{}:{line}: {msg}", path.display())]
    Annotation {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}:{line}: unknown class name `{name}`", path.display())]
    UnknownClass {
        path: PathBuf,
        line: usize,
        name: String,
    },

    #[error("labels are not one-hot")]
    NotOneHot,

    #[error("non-finite loss at epoch {epoch}; offending batch: {}", pair_ids.join(", "))]
    NonFiniteLoss { epoch: usize, pair_ids: Vec<String> },

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("class list mismatch between checkpoint and manifest")]
    ClassListMismatch,

    #[error("empty dataset")]
    EmptyDataset,

    #[error("config: {0}")]
    Config(String),

    #[error("missing feature for `{0}`")]
    MissingFeature(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Wav(#[from] hound::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
