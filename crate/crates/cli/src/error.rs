use std::fmt;
use std::path::Path;

use spadcorr::correlator::CorrelatorError;
use spadcorr::epr::EprError;
use spadcorr::io::IoError;
use spadcorr::pipeline::PipelineError;
use spadcorr::sensor::SimError;
use spadcorr::{Error, ErrorClass};

/// A failure with the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Data, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { class: ErrorClass::Numeric, message: message.into() }
    }

    /// Wrap a file system error with the offending path.
    pub fn file(path: &Path, e: std::io::Error) -> Self {
        Self::data(format!("{}: {e}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        self.class.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self { class: e.class(), message: e.to_string() }
    }
}

macro_rules! via_core_error {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        })*
    };
}

via_core_error!(IoError, CorrelatorError, EprError, SimError, PipelineError);
