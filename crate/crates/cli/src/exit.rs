//! Exit-code policy and the error type every subcommand returns.
//!
//! Codes: 0 success, 1 usage error (bad flags, malformed config overrides),
//! 2 data error (unreadable or inconsistent inputs), 3 numeric failure
//! (divergence, failed gradient check).

use pgrec_core::Error;

pub const USAGE: i32 = 1;
pub const DATA: i32 = 2;
pub const NUMERIC: i32 = 3;

/// A subcommand failure carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> CliError {
        CliError { code: USAGE, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> CliError {
        CliError { code: NUMERIC, message: message.into() }
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> CliError {
        let code = match err {
            Error::Numeric(_) => NUMERIC,
            _ => DATA,
        };
        CliError { code, message: err.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
