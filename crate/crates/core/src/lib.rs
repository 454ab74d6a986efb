//! Simulation and correlation analysis of spatially entangled photon pairs
//! recorded by a time-resolving SPAD array.
//!
//! * [`optics`] evaluates two-photon joint densities and maps sensor
//!   coordinates to object-plane position or transverse momentum.
//! * [`sensor`] generates time-tagged frames with detector imperfections.
//! * [`correlator`] accumulates coincidences and applies accidental and
//!   cross-talk corrections.
//! * [`epr`] turns projected correlations into EPR verdicts.
//! * [`io`] holds the binary event format, snapshots, config and exports.
//! * [`pipeline`] wires them together for end-to-end runs.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Dense tensors are indexed by several loop variables at once.
#![allow(clippy::needless_range_loop)]

pub mod correlator;
pub mod epr;
mod error;
pub mod geometry;
pub mod io;
pub mod optics;
pub mod pipeline;
pub mod sensor;

pub use error::{Error, ErrorClass};
pub use geometry::{linear_index, PixelCoord, SensorGeometry};
