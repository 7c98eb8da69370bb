use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("sampling failed: {0}")]
    Sampling(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("grid specs do not match")]
    SpecMismatch,
    #[error("malformed {format} data: {msg}")]
    Format { format: &'static str, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(format: &'static str, msg: impl Into<String>) -> Self {
        Error::Format {
            format,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
