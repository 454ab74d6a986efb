//! Event files, snapshots, run configuration and plot-data export.

pub mod config;
pub mod events;
pub mod export;
pub mod snapshot;

use thiserror::Error;

pub use config::{RunConfig, CONFIG_KEYS};
pub use events::{
    densify, read_events, write_events, EventFileHeader, EventReader, EventWriter, EVENT_MAGIC, FOOTER_LEN, HEADER_LEN,
};
pub use snapshot::{
    read_accumulator, read_corrected, write_accumulator, write_corrected, ACCUMULATOR_MAGIC, CORRECTED_MAGIC,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IoError {
    #[error("bad magic number")]
    BadMagic,
    #[error("bad header: {0}")]
    BadHeader(String),
    #[error("file is truncated")]
    Truncated,
    #[error("frame {frame_id}: {reason}")]
    InvariantViolation { frame_id: u32, reason: String },
    #[error("frame id {next} does not follow {previous}")]
    OrderViolation { previous: u32, next: u32 },
    #[error("frame {frame_id}: {reason}")]
    RangeViolation { frame_id: u32, reason: String },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e.to_string())
    }
}
