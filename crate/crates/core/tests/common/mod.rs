//! Independent reference implementations shared by the integration tests.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use spadcorr::correlator::{CorrectedG2, Provenance, WindowConfig};
use spadcorr::sensor::{EventRecord, Frame};
use spadcorr::{PixelCoord, SensorGeometry};

/// A frame with up to `max_events` hits on distinct pixels.
pub fn random_frame<R: Rng>(rng: &mut R, id: u32, g: SensorGeometry, bins: u16, max_events: usize) -> Frame {
    let mut pixels: Vec<PixelCoord> =
        (1..=g.n_y).flat_map(|y| (1..=g.n_x).map(move |x| PixelCoord::new(x, y))).collect();
    pixels.shuffle(rng);
    let k = rng.random_range(0..=max_events.min(pixels.len()));
    let events = pixels[..k].iter().map(|&pixel| EventRecord { pixel, tdc: rng.random_range(0..bins) as u8 }).collect();
    Frame::new(id, events)
}

/// Counters keyed by 1-based pixel coordinates.
#[derive(Debug, Default)]
pub struct ReferenceCounts {
    pub g1: HashMap<PixelCoord, u64>,
    pub g2: HashMap<(PixelCoord, PixelCoord), u64>,
    pub g2_shifted: HashMap<(PixelCoord, PixelCoord), u64>,
    pub dt: HashMap<i32, u64>,
    pub n_frames: u64,
}

/// Quadratic loop over ordered event pairs.
pub fn reference_accumulate(frames: &[Frame], windows: WindowConfig) -> ReferenceCounts {
    let mut r = ReferenceCounts::default();
    let w = windows.window as i32;
    for f in frames {
        r.n_frames += 1;
        for (i, e1) in f.events.iter().enumerate() {
            *r.g1.entry(e1.pixel).or_default() += 1;
            for (j, e2) in f.events.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = e1.tdc as i32 - e2.tdc as i32;
                *r.dt.entry(d).or_default() += 1;
                if d.abs() <= w {
                    *r.g2.entry((e1.pixel, e2.pixel)).or_default() += 1;
                } else if let Some(s) = windows.shift {
                    let s = s as i32;
                    if (s - w..=s + w).contains(&d.abs()) {
                        *r.g2_shifted.entry((e1.pixel, e2.pixel)).or_default() += 1;
                    }
                }
            }
        }
    }
    r
}

pub fn random_tensor<R: Rng>(rng: &mut R, g: SensorGeometry, mask: Option<u16>) -> CorrectedG2 {
    let n = g.n_pixels();
    let values = (0..n * n).map(|_| rng.random_range(-1.0..5.0)).collect();
    let g1 = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    let provenance = if mask.is_some() { Provenance::RAW | Provenance::NEIGHBOR_MASKED } else { Provenance::RAW };
    CorrectedG2::from_parts(g, values, g1, 1_000_000, provenance, mask).unwrap()
}

fn coords(g: SensorGeometry) -> impl Iterator<Item = PixelCoord> + Clone {
    (1..=g.n_y).flat_map(move |y| (1..=g.n_x).map(move |x| PixelCoord::new(x, y)))
}

fn excluded(p1: PixelCoord, p2: PixelCoord, mask: Option<u16>) -> bool {
    let d = p1.x.abs_diff(p2.x).max(p1.y.abs_diff(p2.y));
    d == 0 || mask.is_some_and(|r| d <= r)
}

/// `G²(x1, x2)` and `G²(y1, y2)` from explicit loops over both pixels.
pub fn reference_project_axes(t: &CorrectedG2) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let g = t.geometry();
    let (nx, ny) = (g.n_x as usize, g.n_y as usize);
    let mut px = vec![vec![0.0; nx]; nx];
    let mut py = vec![vec![0.0; ny]; ny];
    for x1 in 1..=g.n_x {
        for x2 in 1..=g.n_x {
            for y1 in 1..=g.n_y {
                for y2 in 1..=g.n_y {
                    let v = t.at(g.flat(PixelCoord::new(x1, y1)), g.flat(PixelCoord::new(x2, y2)));
                    px[x1 as usize - 1][x2 as usize - 1] += v;
                    py[y1 as usize - 1][y2 as usize - 1] += v;
                }
            }
        }
    }
    (px, py)
}

/// Sum and difference maps keyed by integer pixel coordinates, as
/// `(value, pairs)`, skipping excluded pixel pairs.
pub type OffsetMap = HashMap<(i32, i32), (f64, u32)>;

pub fn reference_sum_diff(t: &CorrectedG2) -> (OffsetMap, OffsetMap) {
    let g = t.geometry();
    let mut sum = OffsetMap::new();
    let mut diff = OffsetMap::new();
    for p1 in coords(g) {
        for p2 in coords(g) {
            if excluded(p1, p2, t.mask_radius()) {
                continue;
            }
            let v = t.at(g.flat(p1), g.flat(p2));
            let s = sum.entry((p1.x as i32 + p2.x as i32, p1.y as i32 + p2.y as i32)).or_default();
            s.0 += v;
            s.1 += 1;
            let d = diff.entry((p1.x as i32 - p2.x as i32, p1.y as i32 - p2.y as i32)).or_default();
            d.0 += v;
            d.1 += 1;
        }
    }
    (sum, diff)
}

/// Relative-or-absolute closeness for sums of many terms.
pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}
