//! Error type shared across the toolkit.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the toolkit.
///
/// Each variant class maps to a distinct process exit code so that pipeline
/// drivers can tell schema problems, missing upstream artifacts and shape
/// mismatches apart (see [`Error::exit_code`]).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input artifact: {0}")]
    MissingArtifact(PathBuf),

    #[error("{path}: not a RIFF/WAVE file ({detail})")]
    NotWav { path: PathBuf, detail: String },

    #[error("{path}: unsupported encoding (only 16-bit integer PCM is accepted)")]
    NonPcmEncoding { path: PathBuf },

    #[error("{path}: unsupported channel count {channels} (only mono is accepted)")]
    UnsupportedChannelCount { path: PathBuf, channels: u16 },

    #[error("silent input: signal has no nonzero sample")]
    SilentInput,

    #[error("input too short: need at least {needed} samples, got {got}")]
    InputTooShort { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("model container error: {0}")]
    Container(String),

    #[error("config schema violation: {0}")]
    Schema(String),

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: String,
        got: String,
    },

    #[error("speaker {speaker} has too few examples for the requested split")]
    TooFewExamples { speaker: String },

    #[error("non-finite loss at epoch {epoch}, example {example}")]
    NonFiniteLoss { epoch: usize, example: usize },

    #[error("{0}")]
    Other(String),
}

impl Error {
    /// Stable process exit code for the CLI.
    ///
    /// 2 = config/schema violation, 3 = missing upstream artifact,
    /// 4 = dimension mismatch between stored models and inputs,
    /// 1 = everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema(_) | Error::InvalidParameter(_) => 2,
            Error::MissingArtifact(_) => 3,
            Error::DimensionMismatch { .. } => 4,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
