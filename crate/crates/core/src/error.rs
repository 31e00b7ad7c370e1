use thiserror::Error;

/// Errors produced anywhere in the localization pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singularity: {0}")]
    Singularity(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Coarse error class, shared by the CLI exit codes and the C status codes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Io => 3,
            ErrorClass::Numeric => 4,
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            ErrorClass::Config => "E_CONFIG",
            ErrorClass::Io => "E_IO",
            ErrorClass::Numeric => "E_NUMERIC",
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) | Error::Geometry(_) | Error::Parse { .. } => ErrorClass::Config,
            Error::Io(_) | Error::Csv(_) => ErrorClass::Io,
            Error::Wav(hound::Error::IoError(_)) => ErrorClass::Io,
            Error::Wav(_) => ErrorClass::Config,
            Error::Domain(_) | Error::Singularity(_) | Error::Numeric(_) => ErrorClass::Numeric,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
