//! Failure classes and their process exit codes.

use std::fmt;

use edgesplit_radio::RadioError;

/// A configuration file or flag that cannot be used.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

/// Maps an error chain to the exit code: 2 for configuration problems, 3
/// for an infeasible allocation problem, 4 for everything else.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return EXIT_CONFIG;
        }
        if let Some(RadioError::Infeasible { .. }) = cause.downcast_ref::<RadioError>() {
            return EXIT_INFEASIBLE;
        }
    }
    EXIT_RUNTIME
}
