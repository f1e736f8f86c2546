use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("token {token} spans {pieces} word pieces, more than the segment length {max}")]
    TokenTooLong { token: usize, pieces: usize, max: usize },

    #[error("word piece {piece} is not covered by any segment")]
    CoverageGap { piece: usize },

    #[error("segment of {len} pieces exceeds the encoder limit of {max}")]
    SegmentTooLong { len: usize, max: usize },

    #[error("encoder: {0}")]
    Encoder(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss {loss} at step {step} (document {doc_key})")]
    NonFiniteLoss { step: usize, doc_key: String, loss: f64 },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::Config(message.into())
    }

    /// True for errors caused by bad input or configuration rather than a
    /// failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Config(_) | Error::Partition(_) | Error::TokenTooLong { .. } | Error::SegmentTooLong { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
