use std::fmt;

use hormander_core::exponents::ExponentError;
use hormander_core::lab::LabError;
use hormander_core::lie::LieError;
use hormander_core::metric::MetricError;

#[derive(Debug)]
pub enum RunError {
    Config(String),
    Model(String),
    UnknownSuite(String),
    /// A suite's exponent preconditions do not hold.
    Rejected(String),
    Compute(String),
    Io(String),
}

impl RunError {
    /// Process exit code; every error is a usage or configuration failure.
    pub fn exit_code(&self) -> i32 {
        1
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Config(s) => write!(f, "config error: {s}"),
            RunError::Model(s) => write!(f, "model error: {s}"),
            RunError::UnknownSuite(s) => {
                write!(f, "unknown suite '{s}'; known suites: {}", crate::session::SUITES.join(", "))
            }
            RunError::Rejected(s) => write!(f, "REJECTED: {s}"),
            RunError::Compute(s) => write!(f, "computation failed: {s}"),
            RunError::Io(s) => write!(f, "io error: {s}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> RunError {
        RunError::Io(e.to_string())
    }
}

impl From<LieError> for RunError {
    fn from(e: LieError) -> RunError {
        RunError::Compute(e.to_string())
    }
}

impl From<MetricError> for RunError {
    fn from(e: MetricError) -> RunError {
        RunError::Compute(e.to_string())
    }
}

impl From<ExponentError> for RunError {
    fn from(e: ExponentError) -> RunError {
        RunError::Rejected(e.to_string())
    }
}

impl From<LabError> for RunError {
    fn from(e: LabError) -> RunError {
        match e {
            LabError::Exponent(e) => RunError::Rejected(e.to_string()),
            other => RunError::Compute(other.to_string()),
        }
    }
}
