use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Invalid configuration or design request.
    Config,
    /// A precondition of an operation was violated by its arguments.
    Contract,
    /// Failure while processing data.
    Runtime,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("width mismatch: {left} bits vs {right} bits")]
    WidthMismatch { left: u32, right: u32 },

    #[error("invalid word width {0} (supported: 1..=64)")]
    InvalidWidth(u32),

    #[error("value {value} is not representable in {width} bits")]
    ValueOutOfRange { value: i128, width: u32 },

    #[error("cannot truncate a {from}-bit word to {to} bits")]
    TruncateWiden { from: u32, to: u32 },

    #[error("configuration: {0}")]
    Config(String),

    #[error("input sample {index} = {value} exceeds the {width}-bit input range")]
    InputRange { index: usize, value: i64, width: u32 },

    #[error("filter design: {0}")]
    Design(String),

    #[error("sample rate mismatch: stage expects {expected} Hz, stream is {actual} Hz")]
    RateMismatch { expected: f64, actual: f64 },

    #[error("modulator unstable at sample {index} (state magnitude {magnitude:.3e})")]
    Unstable { index: usize, magnitude: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("stream format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::Design(_) => ErrorKind::Config,
            Error::WidthMismatch { .. }
            | Error::InvalidWidth(_)
            | Error::ValueOutOfRange { .. }
            | Error::TruncateWiden { .. }
            | Error::RateMismatch { .. }
            | Error::Contract(_) => ErrorKind::Contract,
            Error::InputRange { .. }
            | Error::Unstable { .. }
            | Error::Format(_)
            | Error::Io(_) => ErrorKind::Runtime,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }
}
