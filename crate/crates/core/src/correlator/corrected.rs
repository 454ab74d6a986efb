use bitflags::bitflags;
use serde::{Deserialize, Serialize};

use super::{CorrelationAccumulator, CorrelatorError};
use crate::geometry::SensorGeometry;

bitflags! {
    /// Corrections applied to a [`CorrectedG2`].
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
    pub struct Provenance: u8 {
        const RAW = 0b0001;
        const ACCIDENTAL_SUBTRACTED = 0b0010;
        const CROSSTALK_CORRECTED = 0b0100;
        const NEIGHBOR_MASKED = 0b1000;
    }
}

/// Dense correlation tensor in counts per million frames.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrectedG2 {
    geometry: SensorGeometry,
    values: Vec<f64>,
    /// Single-pixel detections per million frames.
    g1: Vec<f64>,
    n_frames: u64,
    provenance: Provenance,
    mask_radius: Option<u16>,
}

impl CorrectedG2 {
    pub fn from_parts(
        geometry: SensorGeometry,
        values: Vec<f64>,
        g1: Vec<f64>,
        n_frames: u64,
        provenance: Provenance,
        mask_radius: Option<u16>,
    ) -> Result<Self, CorrelatorError> {
        let n = geometry.n_pixels();
        if values.len() != n * n || g1.len() != n {
            return Err(CorrelatorError::ShapeMismatch);
        }
        if provenance.contains(Provenance::NEIGHBOR_MASKED) != mask_radius.is_some() {
            return Err(CorrelatorError::Config("mask flag and mask radius disagree".into()));
        }
        Ok(Self { geometry, values, g1, n_frames, provenance, mask_radius })
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn g1(&self) -> &[f64] {
        &self.g1
    }

    pub fn n_frames(&self) -> u64 {
        self.n_frames
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn mask_radius(&self) -> Option<u16> {
        self.mask_radius
    }

    pub fn at(&self, flat1: usize, flat2: usize) -> f64 {
        self.values[flat1 * self.geometry.n_pixels() + flat2]
    }

    /// Whether the pixel pair is excluded from analysis: the diagonal
    /// always, plus the neighbour band once masked.
    pub fn is_excluded(&self, flat1: usize, flat2: usize) -> bool {
        if flat1 == flat2 {
            return true;
        }
        match self.mask_radius {
            Some(r) => chebyshev(self.geometry, flat1, flat2) <= r as u32,
            None => false,
        }
    }
}

/// Chebyshev distance between two flat pixel indices.
pub(crate) fn chebyshev(g: SensorGeometry, a: usize, b: usize) -> u32 {
    let n_x = g.n_x as usize;
    let dx = (a % n_x).abs_diff(b % n_x);
    let dy = (a / n_x).abs_diff(b / n_x);
    dx.max(dy) as u32
}

/// Counts scaled to per-Mframe units, flagged raw.
pub fn normalize(acc: &CorrelationAccumulator) -> Result<CorrectedG2, CorrelatorError> {
    let n_frames = acc.n_frames();
    if n_frames == 0 {
        return Err(CorrelatorError::EmptyAccumulator);
    }
    let scale = 1e6 / n_frames as f64;
    Ok(CorrectedG2 {
        geometry: acc.geometry(),
        values: acc.g2().iter().map(|&c| c as f64 * scale).collect(),
        g1: acc.g1().iter().map(|&c| c as f64 * scale).collect(),
        n_frames,
        provenance: Provenance::RAW,
        mask_radius: None,
    })
}

/// Where genuine correlations are expected, for the g1-product mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrelationLocus {
    /// Near field: partners land close to each other.
    Diagonal,
    /// Far field: partners land point-mirrored about the sensor centre.
    AntiDiagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccidentalMethod {
    /// Counts in the time-shifted window, rescaled to the coincidence window.
    ShiftedWindow,
    /// `c · g1(p1) · g1(p2)` with `c` fitted on pairs at Chebyshev distance
    /// at least `min_distance` from both the diagonal and `locus`.
    G1Product { locus: CorrelationLocus, min_distance: u16 },
}

/// Minimum number of pixel pairs for the g1-product fit.
pub const MIN_UNCORRELATED_PAIRS: usize = 100;

/// Accidental-coincidence estimate in counts per Mframe.
#[derive(Debug, Clone, PartialEq)]
pub struct AccidentalEstimate {
    pub values: Vec<f64>,
    pub method: AccidentalMethod,
    /// Fitted product scale (g1-product only).
    pub product_scale: Option<f64>,
}

pub fn estimate_accidentals(
    acc: &CorrelationAccumulator,
    method: AccidentalMethod,
) -> Result<AccidentalEstimate, CorrelatorError> {
    let n_frames = acc.n_frames();
    if n_frames == 0 {
        return Err(CorrelatorError::EmptyAccumulator);
    }
    let per_mframe = 1e6 / n_frames as f64;
    match method {
        AccidentalMethod::ShiftedWindow => {
            let (Some(shifted), Some(ratio)) = (acc.g2_shifted(), acc.shifted_window_scale()) else {
                return Err(CorrelatorError::Config("accumulator was built without a shifted window".into()));
            };
            let scale = ratio * per_mframe;
            Ok(AccidentalEstimate {
                values: shifted.iter().map(|&c| c as f64 * scale).collect(),
                method,
                product_scale: None,
            })
        }
        AccidentalMethod::G1Product { locus, min_distance } => {
            let g = acc.geometry();
            let n = g.n_pixels();
            let g1: Vec<f64> = acc.g1().iter().map(|&c| c as f64 * per_mframe).collect();
            let (mut num, mut den, mut used) = (0.0, 0.0, 0usize);
            for a in 0..n {
                for b in 0..n {
                    if !uncorrelated(g, a, b, locus, min_distance) {
                        continue;
                    }
                    let p = g1[a] * g1[b];
                    num += p * acc.g2()[a * n + b] as f64 * per_mframe;
                    den += p * p;
                    used += 1;
                }
            }
            if used < MIN_UNCORRELATED_PAIRS {
                return Err(CorrelatorError::InsufficientMask { pairs: used });
            }
            let c = if den > 0.0 { num / den } else { 0.0 };
            Ok(AccidentalEstimate { values: g1_product(&g1, c), method, product_scale: Some(c) })
        }
    }
}

/// `c · g1(p1) · g1(p2)` off the diagonal.
pub fn g1_product(g1: &[f64], c: f64) -> Vec<f64> {
    let n = g1.len();
    let mut values = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            if a != b {
                values[a * n + b] = c * g1[a] * g1[b];
            }
        }
    }
    values
}

fn uncorrelated(g: SensorGeometry, a: usize, b: usize, locus: CorrelationLocus, min: u16) -> bool {
    let min = min as u32;
    if chebyshev(g, a, b) < min {
        return false;
    }
    let n_x = g.n_x as usize;
    // 0-based coordinates, so the mirror of c is (n − 1) − c.
    let (ax, ay, bx, by) = (a % n_x, a / n_x, b % n_x, b / n_x);
    let d = match locus {
        CorrelationLocus::Diagonal => return true,
        CorrelationLocus::AntiDiagonal => {
            let sx = (ax + bx).abs_diff(g.n_x as usize - 1);
            let sy = (ay + by).abs_diff(g.n_y as usize - 1);
            sx.max(sy) as u32
        }
    };
    d >= min
}

/// Elementwise `g2 − estimate`; negative results are kept.
pub fn subtract_accidentals(g2: &CorrectedG2, estimate: &AccidentalEstimate) -> Result<CorrectedG2, CorrelatorError> {
    if g2.provenance != Provenance::RAW {
        return Err(CorrelatorError::FlagOrderViolation { stage: "accidental subtraction", found: g2.provenance });
    }
    if estimate.values.len() != g2.values.len() {
        return Err(CorrelatorError::ShapeMismatch);
    }
    let mut out = g2.clone();
    out.values.iter_mut().zip(&estimate.values).for_each(|(v, a)| *v -= a);
    out.provenance |= Provenance::ACCIDENTAL_SUBTRACTED;
    Ok(out)
}

/// Zero every pair within Chebyshev distance `radius`.
pub fn mask_neighbors(g2: &CorrectedG2, radius: u16) -> CorrectedG2 {
    let mut out = g2.clone();
    let g = g2.geometry;
    let n = g.n_pixels();
    let radius = match g2.mask_radius {
        Some(r) => r.max(radius),
        None => radius,
    };
    for a in 0..n {
        for b in 0..n {
            if chebyshev(g, a, b) <= radius as u32 {
                out.values[a * n + b] = 0.0;
            }
        }
    }
    out.provenance |= Provenance::NEIGHBOR_MASKED;
    out.mask_radius = Some(radius);
    out
}
