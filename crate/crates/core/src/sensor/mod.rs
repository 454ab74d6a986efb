//! Time-resolving SPAD array model: configuration, frame records and the
//! Monte Carlo frame generator.

mod sim;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{PixelCoord, SensorGeometry};

pub use sim::{inject_crosstalk, quantize_tdc, sample_pair, Detection, FrameTruth, OutOfFrame, Simulator};

/// Photon detection efficiency of the reference sensor at 810 nm.
pub const HARDWARE_EFFICIENCY_810NM: f64 = 0.008;

/// Seed for the default per-pixel timing offsets.
pub const DEFAULT_OFFSET_SEED: u64 = 0x5eed_0ff5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
}

/// Detector geometry, timing and noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub geometry: SensorGeometry,
    pub pixel_pitch_um: f64,
    pub tdc_bin_ps: f64,
    pub bins_per_frame: u16,
    /// Probability that an incident photon is detected.
    pub efficiency: f64,
    /// Dark count rate per pixel, Hz.
    pub dark_rate_hz: f64,
    /// Gaussian timing jitter per detection, ps.
    pub jitter_sigma_ps: f64,
    /// Static timing offset of each pixel (flat index order), ps.
    pub pixel_offsets_ps: Vec<f64>,
}

impl Default for SensorConfig {
    fn default() -> Self {
        let geometry = SensorGeometry::default();
        Self {
            geometry,
            pixel_pitch_um: 44.67,
            tdc_bin_ps: 205.0,
            bins_per_frame: 255,
            efficiency: 0.5,
            dark_rate_hz: 1000.0,
            jitter_sigma_ps: 200.0,
            pixel_offsets_ps: uniform_offsets(geometry, 400.0, DEFAULT_OFFSET_SEED),
        }
    }
}

/// Per-pixel offsets drawn uniformly from ±`half_width_ps`.
pub fn uniform_offsets(geometry: SensorGeometry, half_width_ps: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..geometry.n_pixels())
        .map(|_| if half_width_ps > 0.0 { rng.random_range(-half_width_ps..half_width_ps) } else { 0.0 })
        .collect()
}

impl SensorConfig {
    /// Ideal detector: unit efficiency, no noise, no timing spread.
    pub fn ideal() -> Self {
        let geometry = SensorGeometry::default();
        Self {
            efficiency: 1.0,
            dark_rate_hz: 0.0,
            jitter_sigma_ps: 0.0,
            pixel_offsets_ps: vec![0.0; geometry.n_pixels()],
            ..Self::default()
        }
    }

    /// Frame gate length in ps.
    pub fn frame_duration_ps(&self) -> f64 {
        self.bins_per_frame as f64 * self.tdc_bin_ps
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let fail = |m: &str| Err(SimError::Config(m.to_string()));
        if self.geometry.n_x == 0 || self.geometry.n_y == 0 {
            return fail("sensor dimensions must be nonzero");
        }
        if self.geometry.n_pixels() > u16::MAX as usize {
            return fail("sensor has more pixels than a 16-bit index can address");
        }
        if !(0.0..=1.0).contains(&self.efficiency) {
            return fail("efficiency must lie in [0, 1]");
        }
        if self.bins_per_frame == 0 || self.bins_per_frame > 256 {
            return fail("bins_per_frame must lie in 1..=256");
        }
        if !(self.tdc_bin_ps > 0.0) {
            return fail("tdc bin must be > 0");
        }
        if !(self.pixel_pitch_um > 0.0) {
            return fail("pixel pitch must be > 0");
        }
        if !(self.dark_rate_hz >= 0.0) || !self.dark_rate_hz.is_finite() {
            return fail("dark rate must be finite and >= 0");
        }
        if !(self.jitter_sigma_ps >= 0.0) || !self.jitter_sigma_ps.is_finite() {
            return fail("jitter must be finite and >= 0");
        }
        if self.pixel_offsets_ps.len() != self.geometry.n_pixels() {
            return fail("one timing offset per pixel is required");
        }
        if self.pixel_offsets_ps.iter().any(|o| !o.is_finite()) {
            return fail("timing offsets must be finite");
        }
        Ok(())
    }
}

/// Probability that a detection triggers the pixel at a relative offset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkSpec {
    probabilities: BTreeMap<(i16, i16), f64>,
}

impl CrosstalkSpec {
    pub fn none() -> Self {
        Self::default()
    }

    /// Same probability for the four nearest neighbours.
    pub fn nearest_neighbors(p: f64) -> Result<Self, SimError> {
        Self::none().with(1, 0, p)?.with(-1, 0, p)?.with(0, 1, p)?.with(0, -1, p)
    }

    pub fn with(mut self, dx: i16, dy: i16, p: f64) -> Result<Self, SimError> {
        if (dx, dy) == (0, 0) && p != 0.0 {
            return Err(SimError::Config("cross-talk at offset (0, 0) must be 0".into()));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(SimError::Config(format!("cross-talk probability {p} outside [0, 1]")));
        }
        if p == 0.0 {
            self.probabilities.remove(&(dx, dy));
        } else {
            self.probabilities.insert((dx, dy), p);
        }
        Ok(self)
    }

    pub fn get(&self, dx: i16, dy: i16) -> f64 {
        self.probabilities.get(&(dx, dy)).copied().unwrap_or(0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Nonzero entries as `((dx, dy), p)` in a fixed order.
    pub fn iter(&self) -> impl Iterator<Item = ((i16, i16), f64)> + '_ {
        self.probabilities.iter().map(|(&k, &v)| (k, v))
    }
}

/// One pixel's first detection in a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EventRecord {
    pub pixel: PixelCoord,
    pub tdc: u8,
}

/// All first detections of one frame.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Frame {
    pub frame_id: u32,
    pub events: Vec<EventRecord>,
}

impl Frame {
    pub fn new(frame_id: u32, events: Vec<EventRecord>) -> Self {
        Self { frame_id, events }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}
