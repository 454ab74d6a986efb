use serde::{Deserialize, Serialize};

use super::CorrelatorError;
use crate::geometry::SensorGeometry;
use crate::sensor::Frame;

/// Default coincidence window, TDC bins.
pub const DEFAULT_WINDOW: u16 = 10;
/// Default centre of the shifted accidental window, TDC bins.
pub const DEFAULT_SHIFT: u16 = 21;

/// Window parameters of an accumulation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowConfig {
    pub window: u16,
    /// Centre of a second, time-shifted window used for accidental
    /// estimation. Counts pairs with `|Δt|` in `shift ± window`.
    pub shift: Option<u16>,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { window: DEFAULT_WINDOW, shift: Some(DEFAULT_SHIFT) }
    }
}

impl WindowConfig {
    pub fn validate(&self, bins_per_frame: u16) -> Result<(), CorrelatorError> {
        if self.window >= bins_per_frame {
            return Err(CorrelatorError::Config(format!(
                "window {} must be smaller than the frame length {bins_per_frame}",
                self.window
            )));
        }
        if let Some(shift) = self.shift {
            if shift <= 2 * self.window {
                return Err(CorrelatorError::DisjointnessViolation { window: self.window, shift });
            }
            if shift + self.window >= bins_per_frame {
                return Err(CorrelatorError::Config(format!(
                    "shifted window {shift}±{} does not fit in {bins_per_frame} bins",
                    self.window
                )));
            }
        }
        Ok(())
    }
}

/// Mergeable coincidence counters for one acquisition.
///
/// `g2` and `g2_shifted` are dense `n_pix × n_pix` tensors in flat pixel
/// order, holding both orderings of every pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrelationAccumulator {
    geometry: SensorGeometry,
    bins_per_frame: u16,
    windows: WindowConfig,
    n_frames: u64,
    g1: Vec<u64>,
    g2: Vec<u64>,
    g2_shifted: Option<Vec<u64>>,
    dt_hist: Vec<u64>,
}

impl CorrelationAccumulator {
    pub fn new(geometry: SensorGeometry, bins_per_frame: u16, windows: WindowConfig) -> Result<Self, CorrelatorError> {
        if geometry.n_x == 0 || geometry.n_y == 0 || bins_per_frame == 0 || bins_per_frame > 256 {
            return Err(CorrelatorError::Config("invalid geometry or frame length".into()));
        }
        windows.validate(bins_per_frame)?;
        let n = geometry.n_pixels();
        Ok(Self {
            geometry,
            bins_per_frame,
            windows,
            n_frames: 0,
            g1: vec![0; n],
            g2: vec![0; n * n],
            g2_shifted: windows.shift.map(|_| vec![0; n * n]),
            dt_hist: vec![0; 2 * bins_per_frame as usize - 1],
        })
    }

    /// Rebuild from raw counters, e.g. when loading a snapshot.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        geometry: SensorGeometry,
        bins_per_frame: u16,
        windows: WindowConfig,
        n_frames: u64,
        g1: Vec<u64>,
        g2: Vec<u64>,
        g2_shifted: Option<Vec<u64>>,
        dt_hist: Vec<u64>,
    ) -> Result<Self, CorrelatorError> {
        let empty = Self::new(geometry, bins_per_frame, windows)?;
        let n = geometry.n_pixels();
        if g1.len() != n
            || g2.len() != n * n
            || dt_hist.len() != empty.dt_hist.len()
            || g2_shifted.as_ref().map(Vec::len) != empty.g2_shifted.as_ref().map(Vec::len)
        {
            return Err(CorrelatorError::ShapeMismatch);
        }
        Ok(Self { n_frames, g1, g2, g2_shifted, dt_hist, ..empty })
    }

    /// An empty accumulator with the same configuration.
    pub fn empty_like(&self) -> Self {
        Self::new(self.geometry, self.bins_per_frame, self.windows).expect("validated on construction")
    }

    pub fn geometry(&self) -> SensorGeometry {
        self.geometry
    }

    pub fn bins_per_frame(&self) -> u16 {
        self.bins_per_frame
    }

    pub fn windows(&self) -> WindowConfig {
        self.windows
    }

    pub fn n_frames(&self) -> u64 {
        self.n_frames
    }

    pub fn g1(&self) -> &[u64] {
        &self.g1
    }

    pub fn g2(&self) -> &[u64] {
        &self.g2
    }

    pub fn g2_shifted(&self) -> Option<&[u64]> {
        self.g2_shifted.as_deref()
    }

    /// Counts per tdc difference `t1 − t2`, index `Δt + bins − 1`.
    pub fn dt_hist(&self) -> &[u64] {
        &self.dt_hist
    }

    pub fn g2_at(&self, flat1: usize, flat2: usize) -> u64 {
        self.g2[flat1 * self.geometry.n_pixels() + flat2]
    }

    /// Fold one frame into the counters.
    pub fn add_frame(&mut self, frame: &Frame) -> Result<(), CorrelatorError> {
        let n = self.geometry.n_pixels();
        let mut hits: Vec<(usize, i32)> = Vec::with_capacity(frame.events.len());
        for e in &frame.events {
            if !self.geometry.contains(e.pixel) || e.tdc as u16 >= self.bins_per_frame {
                return Err(CorrelatorError::MalformedFrame {
                    frame_id: frame.frame_id,
                    reason: format!("event {:?} out of range", e),
                });
            }
            hits.push((self.geometry.flat(e.pixel), e.tdc as i32));
        }
        for i in 0..hits.len() {
            for j in 0..i {
                if hits[i].0 == hits[j].0 {
                    return Err(CorrelatorError::MalformedFrame {
                        frame_id: frame.frame_id,
                        reason: format!("pixel {:?} hit twice", self.geometry.unflat(hits[i].0)),
                    });
                }
            }
        }

        let w = self.windows.window as i32;
        let offset = self.bins_per_frame as i32 - 1;
        let shifted = self.windows.shift.map(|s| (s as i32 - w, s as i32 + w));
        for (i, &(a, ta)) in hits.iter().enumerate() {
            self.g1[a] += 1;
            for &(b, tb) in &hits[..i] {
                let d = ta - tb;
                self.dt_hist[(offset + d) as usize] += 1;
                self.dt_hist[(offset - d) as usize] += 1;
                let ad = d.abs();
                if ad <= w {
                    self.g2[a * n + b] += 1;
                    self.g2[b * n + a] += 1;
                } else if let (Some((lo, hi)), Some(g2s)) = (shifted, self.g2_shifted.as_mut()) {
                    if ad >= lo && ad <= hi {
                        g2s[a * n + b] += 1;
                        g2s[b * n + a] += 1;
                    }
                }
            }
        }
        self.n_frames += 1;
        Ok(())
    }

    /// Count frames that produced no events (omitted from event files).
    pub fn add_empty_frames(&mut self, count: u64) {
        self.n_frames += count;
    }

    /// Elementwise sum of two accumulators with identical configuration.
    pub fn merge(mut self, other: Self) -> Result<Self, CorrelatorError> {
        self.merge_from(&other)?;
        Ok(self)
    }

    pub fn merge_from(&mut self, other: &Self) -> Result<(), CorrelatorError> {
        if self.geometry != other.geometry
            || self.bins_per_frame != other.bins_per_frame
            || self.windows != other.windows
        {
            return Err(CorrelatorError::ShapeMismatch);
        }
        fn add(dst: &mut [u64], src: &[u64]) {
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
        }
        add(&mut self.g1, &other.g1);
        add(&mut self.g2, &other.g2);
        add(&mut self.dt_hist, &other.dt_hist);
        if let (Some(d), Some(s)) = (self.g2_shifted.as_mut(), other.g2_shifted.as_ref()) {
            add(d, s);
        }
        self.n_frames += other.n_frames;
        Ok(())
    }

    /// Sum over `|Δt| ≤ window` of the triangular pair-overlap weight
    /// `bins − |Δt|`, proportional to the accidental rate in that window.
    pub fn overlap_weight(&self, lo: u16, hi: u16) -> f64 {
        let b = self.bins_per_frame as i64;
        (-(hi as i64)..=hi as i64).filter(|d| d.unsigned_abs() >= lo as u64).map(|d| (b - d.abs()) as f64).sum()
    }

    /// Ratio converting shifted-window counts to the expected accidental
    /// counts inside the coincidence window.
    pub fn shifted_window_scale(&self) -> Option<f64> {
        let w = self.windows.window;
        let s = self.windows.shift?;
        Some(self.overlap_weight(0, w) / self.overlap_weight(s - w, s + w))
    }
}

/// Accumulate a whole frame stream sequentially.
pub fn accumulate<'a, I>(
    frames: I,
    geometry: SensorGeometry,
    bins_per_frame: u16,
    windows: WindowConfig,
) -> Result<CorrelationAccumulator, CorrelatorError>
where
    I: IntoIterator<Item = &'a Frame>,
{
    let mut acc = CorrelationAccumulator::new(geometry, bins_per_frame, windows)?;
    for f in frames {
        acc.add_frame(f)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PixelCoord;
    use crate::sensor::EventRecord;

    fn ev(x: u16, y: u16, tdc: u8) -> EventRecord {
        EventRecord { pixel: PixelCoord::new(x, y), tdc }
    }

    fn acc(window: u16) -> CorrelationAccumulator {
        CorrelationAccumulator::new(SensorGeometry::default(), 255, WindowConfig { window, shift: None }).unwrap()
    }

    #[test]
    fn pair_within_window() {
        let g = SensorGeometry::default();
        let (a, b) = (PixelCoord::new(3, 4), PixelCoord::new(10, 2));
        let frame = Frame::new(0, vec![ev(3, 4, 10), ev(10, 2, 12)]);
        let mut wide = acc(10);
        wide.add_frame(&frame).unwrap();
        assert_eq!(wide.g2_at(g.flat(a), g.flat(b)), 1);
        assert_eq!(wide.g2_at(g.flat(b), g.flat(a)), 1);
        let mut narrow = acc(1);
        narrow.add_frame(&frame).unwrap();
        assert_eq!(narrow.g2().iter().sum::<u64>(), 0);
        assert_eq!(narrow.dt_hist()[254 + 2], 1);
        assert_eq!(narrow.dt_hist()[254 - 2], 1);
    }

    #[test]
    fn three_events_give_six_increments() {
        let mut a = acc(10);
        a.add_frame(&Frame::new(0, vec![ev(1, 1, 0), ev(2, 1, 5), ev(3, 1, 9)])).unwrap();
        assert_eq!(a.g2().iter().sum::<u64>(), 6);
        assert_eq!(a.g1().iter().sum::<u64>(), 3);
        assert_eq!(a.n_frames(), 1);
    }

    #[test]
    fn malformed_frames_rejected() {
        let mut a = acc(10);
        let dup = Frame::new(7, vec![ev(1, 1, 0), ev(1, 1, 3)]);
        match a.add_frame(&dup) {
            Err(CorrelatorError::MalformedFrame { frame_id, .. }) => assert_eq!(frame_id, 7),
            other => panic!("{other:?}"),
        }
        assert!(a.add_frame(&Frame::new(0, vec![ev(33, 1, 0)])).is_err());
        assert!(a.add_frame(&Frame::new(0, vec![ev(1, 1, 255)])).is_err());
    }

    #[test]
    fn shift_must_clear_both_windows() {
        let g = SensorGeometry::default();
        for shift in [0, 10, 15, 20] {
            let r = CorrelationAccumulator::new(g, 255, WindowConfig { window: 10, shift: Some(shift) });
            assert!(matches!(r, Err(CorrelatorError::DisjointnessViolation { .. })), "{shift}");
        }
        assert!(CorrelationAccumulator::new(g, 255, WindowConfig { window: 10, shift: Some(21) }).is_ok());
        assert!(CorrelationAccumulator::new(g, 255, WindowConfig { window: 10, shift: Some(250) }).is_err());
    }

    #[test]
    fn shifted_window_counts_both_signs() {
        let g = SensorGeometry::default();
        let mut a = CorrelationAccumulator::new(g, 255, WindowConfig::default()).unwrap();
        a.add_frame(&Frame::new(0, vec![ev(1, 1, 0), ev(2, 1, 25)])).unwrap();
        a.add_frame(&Frame::new(1, vec![ev(1, 1, 40), ev(2, 1, 25)])).unwrap();
        let s = a.g2_shifted().unwrap();
        assert_eq!(s.iter().sum::<u64>(), 4);
        assert_eq!(a.g2().iter().sum::<u64>(), 0);
    }

    #[test]
    fn shifted_scale_matches_triangle() {
        let a = CorrelationAccumulator::new(SensorGeometry::default(), 255, WindowConfig::default()).unwrap();
        // Σ_{|d|≤10} (255−|d|) = 21·255 − 110; Σ_{11≤|d|≤31} = 2(21·255 − 441).
        let expected = (21.0 * 255.0 - 110.0) / (2.0 * (21.0 * 255.0 - 441.0));
        assert!((a.shifted_window_scale().unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn merge_requires_same_shape() {
        let a = acc(10);
        let b = acc(5);
        assert!(a.merge(b).is_err());
    }
}
