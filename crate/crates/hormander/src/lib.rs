//! Driver for `hormander-core`: run configuration, the shipped model
//! gallery, oracle dumps, suite dispatch and report files.

pub mod config;
pub mod dump;
pub mod error;
pub mod gallery;
pub mod report;
pub mod session;

pub use config::{RunConfig, SuiteConfig};
pub use error::RunError;
pub use report::{Record, Report};
pub use session::Session;
