use serde::{Deserialize, Serialize};

use super::corrected::{CorrectedG2, Provenance};
use super::CorrelatorError;
use crate::geometry::SensorGeometry;

/// Default side of the centred estimation window, pixels.
pub const DEFAULT_INNER_WINDOW: u16 = 29;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrosstalkOptions {
    pub inner_window: u16,
    /// Chebyshev ring `(lo, hi)` around each offset whose median per-pixel
    /// correlation is subtracted as the smooth genuine-pair background.
    /// `None` applies the bare ratio estimator.
    pub background_ring: Option<(u16, u16)>,
}

impl Default for CrosstalkOptions {
    fn default() -> Self {
        Self { inner_window: DEFAULT_INNER_WINDOW, background_ring: Some((4, 6)) }
    }
}

/// Estimated probability that a detection triggers the pixel at `(Δx, Δy)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkMap {
    radius: u16,
    p: Vec<f64>,
    pub inner_window: u16,
    /// Offsets whose raw estimate was negative and got clamped to zero.
    pub clamped: usize,
}

impl CrosstalkMap {
    pub fn zeros(radius: u16) -> Self {
        let side = 2 * radius as usize + 1;
        Self { radius, p: vec![0.0; side * side], inner_window: 0, clamped: 0 }
    }

    pub fn radius(&self) -> u16 {
        self.radius
    }

    fn index(&self, dx: i32, dy: i32) -> Option<usize> {
        let r = self.radius as i32;
        if dx.abs() > r || dy.abs() > r {
            return None;
        }
        let side = 2 * r + 1;
        Some(((dy + r) * side + dx + r) as usize)
    }

    pub fn get(&self, dx: i32, dy: i32) -> f64 {
        self.index(dx, dy).map_or(0.0, |i| self.p[i])
    }

    pub fn set(&mut self, dx: i32, dy: i32, p: f64) -> Result<(), CorrelatorError> {
        if (dx, dy) == (0, 0) || !(p >= 0.0) {
            return Err(CorrelatorError::Config(format!("invalid cross-talk entry ({dx}, {dy}) = {p}")));
        }
        let i = self.index(dx, dy).ok_or(CorrelatorError::Config("offset outside map".into()))?;
        self.p[i] = p;
        Ok(())
    }

    /// Nonzero entries as `((dx, dy), p)`.
    pub fn iter(&self) -> impl Iterator<Item = ((i32, i32), f64)> + '_ {
        let r = self.radius as i32;
        let side = 2 * r + 1;
        self.p
            .iter()
            .enumerate()
            .filter(|(_, &p)| p != 0.0)
            .map(move |(i, &p)| ((i as i32 % side - r, i as i32 / side - r), p))
    }

    /// All entries row by row, `dy` outer.
    pub fn values(&self) -> &[f64] {
        &self.p
    }
}

/// Offset-resolved sums `Σ_p g2[p, p+Δ]` over `p` in the inner window,
/// with the number of contributing pixels.
fn offset_sums(g2: &CorrectedG2, inner: u16) -> (Vec<f64>, Vec<u32>, i32) {
    let g = g2.geometry();
    let r = inner as i32 - 1;
    let side = (2 * r + 1) as usize;
    let (x0, y0) = ((g.n_x - inner) as i32 / 2, (g.n_y - inner) as i32 / 2);
    let mut sums = vec![0.0; side * side];
    let mut counts = vec![0u32; side * side];
    for py in y0..y0 + inner as i32 {
        for px in x0..x0 + inner as i32 {
            let a = flat0(g, px, py);
            for dy in -r..=r {
                let qy = py + dy;
                if qy < 0 || qy >= g.n_y as i32 {
                    continue;
                }
                for dx in -r..=r {
                    let qx = px + dx;
                    if qx < 0 || qx >= g.n_x as i32 || (dx, dy) == (0, 0) {
                        continue;
                    }
                    let k = ((dy + r) as usize) * side + (dx + r) as usize;
                    sums[k] += g2.at(a, flat0(g, qx, qy));
                    counts[k] += 1;
                }
            }
        }
    }
    (sums, counts, r)
}

fn flat0(g: SensorGeometry, x: i32, y: i32) -> usize {
    y as usize * g.n_x as usize + x as usize
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Cross-talk probabilities from far-field, accidental-subtracted data:
/// `p(Δ) = ½ · Σ_p g2[p, p+Δ] / Σ_p g1(p)` over the inner window.
pub fn estimate_crosstalk(
    g2_ff: &CorrectedG2,
    g1: &[f64],
    options: CrosstalkOptions,
) -> Result<CrosstalkMap, CorrelatorError> {
    let g = g2_ff.geometry();
    let inner = options.inner_window;
    if inner == 0 || inner > g.n_x || inner > g.n_y {
        return Err(CorrelatorError::WindowTooLarge { window: inner, n_x: g.n_x, n_y: g.n_y });
    }
    if g1.len() != g.n_pixels() {
        return Err(CorrelatorError::ShapeMismatch);
    }
    let prov = g2_ff.provenance();
    if !prov.contains(Provenance::ACCIDENTAL_SUBTRACTED)
        || prov.intersects(Provenance::CROSSTALK_CORRECTED | Provenance::NEIGHBOR_MASKED)
    {
        return Err(CorrelatorError::FlagOrderViolation { stage: "cross-talk estimation", found: prov });
    }

    let (sums, counts, r) = offset_sums(g2_ff, inner);
    let side = (2 * r + 1) as usize;
    let (x0, y0) = ((g.n_x - inner) as i32 / 2, (g.n_y - inner) as i32 / 2);
    let mut norm = 0.0;
    for py in y0..y0 + inner as i32 {
        for px in x0..x0 + inner as i32 {
            norm += g1[flat0(g, px, py)];
        }
    }

    let mut map = CrosstalkMap::zeros(r as u16);
    map.inner_window = inner;
    if norm <= 0.0 {
        return Ok(map);
    }
    let mut ring = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            let k = (dy + r) as usize * side + (dx + r) as usize;
            if (dx, dy) == (0, 0) || counts[k] == 0 {
                continue;
            }
            let mut excess = sums[k];
            if let Some((lo, hi)) = options.background_ring {
                ring.clear();
                let (lo, hi) = (lo as i32, hi as i32);
                for ey in dy - hi..=dy + hi {
                    for ex in dx - hi..=dx + hi {
                        let d = (ex - dx).abs().max((ey - dy).abs());
                        if d < lo || ex.abs() > r || ey.abs() > r || (ex, ey) == (0, 0) {
                            continue;
                        }
                        let j = (ey + r) as usize * side + (ex + r) as usize;
                        if counts[j] > 0 {
                            ring.push(sums[j] / counts[j] as f64);
                        }
                    }
                }
                if !ring.is_empty() {
                    excess -= median(&mut ring) * counts[k] as f64;
                }
            }
            let p = 0.5 * excess / norm;
            if p < 0.0 {
                map.clamped += 1;
            } else {
                map.p[k] = p;
            }
        }
    }
    if map.clamped > 0 {
        log::debug!("cross-talk estimate: {} negative offsets clamped to 0", map.clamped);
    }
    Ok(map)
}

/// Remove the expected cross-talk coincidences:
/// `g2(p1,p2) −= p(p2−p1)·g1(p1) + p(p1−p2)·g1(p2)`.
pub fn correct_crosstalk(g2: &CorrectedG2, g1: &[f64], map: &CrosstalkMap) -> Result<CorrectedG2, CorrelatorError> {
    let prov = g2.provenance();
    if !prov.contains(Provenance::ACCIDENTAL_SUBTRACTED)
        || prov.intersects(Provenance::CROSSTALK_CORRECTED | Provenance::NEIGHBOR_MASKED)
    {
        return Err(CorrelatorError::FlagOrderViolation { stage: "cross-talk correction", found: prov });
    }
    let g = g2.geometry();
    let n = g.n_pixels();
    if g1.len() != n {
        return Err(CorrelatorError::ShapeMismatch);
    }
    let mut values = g2.values().to_vec();
    let (nx, ny) = (g.n_x as i32, g.n_y as i32);
    for ((dx, dy), p) in map.iter() {
        for ay in 0..ny {
            let by = ay + dy;
            if by < 0 || by >= ny {
                continue;
            }
            for ax in 0..nx {
                let bx = ax + dx;
                if bx < 0 || bx >= nx {
                    continue;
                }
                let (a, b) = (flat0(g, ax, ay), flat0(g, bx, by));
                // Primary at a, secondary at b; both tensor orderings.
                let expected = p * g1[a];
                values[a * n + b] -= expected;
                values[b * n + a] -= expected;
            }
        }
    }
    CorrectedG2::from_parts(g, values, g2.g1().to_vec(), g2.n_frames(), prov | Provenance::CROSSTALK_CORRECTED, None)
}
