use std::path::PathBuf;

use thiserror::Error;

use crate::schema::Label;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("stratum {0} has no examples")]
    EmptyStratum(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },

    #[error("decode reached the maximum length without a well-formed label")]
    MalformedOutput,

    #[error("checkpoints use different tokenizers")]
    TokenizerMismatch,

    #[error("selection is empty")]
    EmptySelection,

    #[error("expected a checkpoint at stage {expected:?}, found {found:?}")]
    StageMismatch { expected: String, found: String },

    #[error("label {0} is not representable here")]
    UnexpectedLabel(Label),

    #[error("truths and predictions differ in length ({truths} vs {preds})")]
    LengthMismatch { truths: usize, preds: usize },

    #[error("session log has zero unique visitors")]
    ZeroUv,

    #[error("missing upstream artifact {0}")]
    MissingArtifact(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
