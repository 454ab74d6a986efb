//! Coincidence accumulation, accidental and cross-talk corrections, and
//! projections of the four-dimensional correlation tensor.

mod accumulator;
mod corrected;
mod crosstalk;
mod projection;

use thiserror::Error;

pub use crate::geometry::linear_index;
pub use accumulator::{accumulate, CorrelationAccumulator, WindowConfig, DEFAULT_SHIFT, DEFAULT_WINDOW};
pub use corrected::{
    estimate_accidentals, g1_product, mask_neighbors, normalize, subtract_accidentals, AccidentalEstimate,
    AccidentalMethod, CorrectedG2, CorrelationLocus, Provenance, MIN_UNCORRELATED_PAIRS,
};
pub use crosstalk::{correct_crosstalk, estimate_crosstalk, CrosstalkMap, CrosstalkOptions, DEFAULT_INNER_WINDOW};
pub use projection::{project_axes, project_sum_diff, AxisProjection, OffsetGrid, SumDiffProjection};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorrelatorError {
    #[error("malformed frame {frame_id}: {reason}")]
    MalformedFrame { frame_id: u32, reason: String },
    #[error("accumulator holds no frames")]
    EmptyAccumulator,
    #[error("shifted window at {shift} overlaps the coincidence window ±{window}")]
    DisjointnessViolation { window: u16, shift: u16 },
    #[error("uncorrelated mask selects only {pairs} pixel pairs")]
    InsufficientMask { pairs: usize },
    #[error("{stage} cannot follow corrections {found:?}")]
    FlagOrderViolation { stage: &'static str, found: Provenance },
    #[error("inner window {window} exceeds the {n_x}x{n_y} sensor")]
    WindowTooLarge { window: u16, n_x: u16, n_y: u16 },
    #[error("tensor shapes or configurations differ")]
    ShapeMismatch,
    #[error("configuration error: {0}")]
    Config(String),
}
