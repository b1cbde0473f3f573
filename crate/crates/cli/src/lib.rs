//! Library side of the `sheq` command: configuration, study execution, CSV
//! output, sample paths and the self-test suite.

pub mod config;
pub mod sample_path;
pub mod selftest;
pub mod study;

pub use config::{StudyConfig, StudyKind, SweepAxis, Truncation};
pub use study::{run_study, write_csv};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl CliError {
    /// 1 for usage, configuration and I/O problems; 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<sheq_core::Error> for CliError {
    fn from(e: sheq_core::Error) -> Self {
        match e {
            sheq_core::Error::EigenConvergence(_) => CliError::Numerical(e.to_string()),
            sheq_core::Error::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

/// `{:.16e}`: 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else {
        format!("{x:.16e}")
    }
}

pub(crate) fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "nan".into(), fmt_f64)
}
