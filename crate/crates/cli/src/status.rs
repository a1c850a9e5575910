use torsonet::Error;

pub const OK: u8 = 0;
pub const VERIFY_FAILED: u8 = 1;
pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;
pub const RUNTIME: u8 = 4;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Runtime(String),
    /// Checks ran and reported failures; the report is already printed.
    VerifyFailed,
    /// Per-item errors were already reported.
    DataReported,
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::VerifyFailed => VERIFY_FAILED,
            CliError::Usage(_) => USAGE,
            CliError::Data(_) | CliError::DataReported => DATA,
            CliError::Runtime(_) => RUNTIME,
        }
    }

    pub fn message(&self) -> Option<&str> {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Runtime(m) => Some(m),
            CliError::VerifyFailed | CliError::DataReported => None,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Argument(_) => CliError::Usage(msg),
            Error::Format(_)
            | Error::Corrupt(_)
            | Error::Dataset(_)
            | Error::Data(_)
            | Error::Decode { .. }
            | Error::Io(_) => CliError::Data(msg),
            Error::Shape(_)
            | Error::Numeric { .. }
            | Error::State(_)
            | Error::Build(_)
            | Error::Diverged { .. } => CliError::Runtime(msg),
        }
    }
}
