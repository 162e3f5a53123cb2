//! Maps error chains to process exit codes: I/O failures exit 2, anything
//! else (validation, parsing, degenerate data) exits 1.

use std::process::ExitCode;

use eru_core::config::ConfigError;
use eru_core::io::FormatError;

pub const VALIDATION_FAILURE: u8 = 1;
pub const IO_FAILURE: u8 = 2;

pub fn code_for(err: &anyhow::Error) -> ExitCode {
    for cause in err.chain() {
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return ExitCode::from(IO_FAILURE);
        }
        if let Some(format_err) = cause.downcast_ref::<FormatError>() {
            return if format_err.is_io() {
                ExitCode::from(IO_FAILURE)
            } else {
                ExitCode::from(VALIDATION_FAILURE)
            };
        }
        if let Some(config_err) = cause.downcast_ref::<ConfigError>() {
            return if matches!(config_err, ConfigError::Io { .. }) {
                ExitCode::from(IO_FAILURE)
            } else {
                ExitCode::from(VALIDATION_FAILURE)
            };
        }
    }
    ExitCode::from(VALIDATION_FAILURE)
}
