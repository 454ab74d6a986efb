use thiserror::Error;

use crate::correlator::CorrelatorError;
use crate::epr::{EprError, FitError};
use crate::io::IoError;
use crate::optics::OpticsError;
use crate::pipeline::PipelineError;
use crate::sensor::SimError;

/// Crate-wide error, grouped by how a command-line caller should exit.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Optics(#[from] OpticsError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Correlator(#[from] CorrelatorError),
    #[error(transparent)]
    Epr(#[from] EprError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numeric => 4,
        }
    }
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Optics(_) | Error::Sim(_) => ErrorClass::Config,
            Error::Correlator(e) => match e {
                CorrelatorError::MalformedFrame { .. }
                | CorrelatorError::EmptyAccumulator
                | CorrelatorError::ShapeMismatch
                | CorrelatorError::FlagOrderViolation { .. } => ErrorClass::Data,
                CorrelatorError::InsufficientMask { .. } => ErrorClass::Numeric,
                _ => ErrorClass::Config,
            },
            Error::Epr(e) => match e {
                EprError::Fit(FitError::NotConverged { .. }) | EprError::NoUsableFit(_) => ErrorClass::Numeric,
                EprError::Fit(FitError::DegenerateInput(_)) => ErrorClass::Numeric,
                EprError::InvalidTable(_) | EprError::AllColumnsEmpty => ErrorClass::Data,
            },
            Error::Io(e) => match e {
                IoError::Config { .. } => ErrorClass::Config,
                _ => ErrorClass::Data,
            },
        }
    }
}

impl From<PipelineError> for Error {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Sim(e) => Error::Sim(e),
            PipelineError::Correlator(e) => Error::Correlator(e),
            PipelineError::Epr(e) => Error::Epr(e),
            PipelineError::ThreadPool(m) => Error::Sim(SimError::Config(m)),
        }
    }
}
