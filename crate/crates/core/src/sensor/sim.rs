use std::f64::consts::FRAC_1_SQRT_2;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use thiserror::Error;

use super::{CrosstalkSpec, EventRecord, Frame, SensorConfig, SimError};
use crate::geometry::{PixelCoord, SensorGeometry};
use crate::optics::{momentum_to_sensor, position_widths, DoubleGaussianModel, MappingMode, OpticalMapping, Vec2};

/// The photon arrived outside the frame gate.
#[derive(Debug, Error, Clone, Copy, PartialEq)]
#[error("time {0} ps falls outside the frame")]
pub struct OutOfFrame(pub f64);

/// TDC bin of a detection at `t_ps` after the frame start.
pub fn quantize_tdc(t_ps: f64, cfg: &SensorConfig) -> Result<u8, OutOfFrame> {
    if !(t_ps >= 0.0) {
        return Err(OutOfFrame(t_ps));
    }
    let bin = (t_ps / cfg.tdc_bin_ps).floor();
    if bin < cfg.bins_per_frame as f64 {
        Ok(bin as u8)
    } else {
        Err(OutOfFrame(t_ps))
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draw one photon pair and return its two sensor-plane positions (µm,
/// relative to the optical axis). Positions off the sensor are returned
/// unchanged.
pub fn sample_pair<R: Rng + ?Sized>(
    model: &DoubleGaussianModel,
    mapping: &OpticalMapping,
    rng: &mut R,
) -> (Vec2, Vec2) {
    let mut a = [0.0; 2];
    let mut b = [0.0; 2];
    match mapping.mode {
        MappingMode::FarField => {
            for (axis, w) in [model.x, model.y].iter().enumerate() {
                let plus = w.sigma_plus * normal(rng);
                let minus = w.sigma_minus * normal(rng);
                a[axis] = (plus + minus) * FRAC_1_SQRT_2;
                b[axis] = (plus - minus) * FRAC_1_SQRT_2;
            }
            (momentum_to_sensor(a, mapping), momentum_to_sensor(b, mapping))
        }
        MappingMode::NearField => {
            let widths = position_widths(model);
            for (axis, w) in widths.iter().enumerate() {
                let plus = w.sigma_plus_um * normal(rng);
                let minus = w.sigma_minus_um * normal(rng);
                a[axis] = (plus + minus) * FRAC_1_SQRT_2 * mapping.magnification;
                b[axis] = (plus - minus) * FRAC_1_SQRT_2 * mapping.magnification;
            }
            (a, b)
        }
    }
}

/// Where a detection came from. Only tracked for diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    Pair(u32),
    Dark,
    Crosstalk,
}

/// A detection before the first-hit rule and quantization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub pixel: PixelCoord,
    pub time_ps: f64,
    pub origin: Origin,
}

impl Detection {
    pub fn new(pixel: PixelCoord, time_ps: f64) -> Self {
        Self { pixel, time_ps, origin: Origin::Dark }
    }
}

/// Append single-generation cross-talk detections. Each original detection
/// triggers the pixel at offset Δ with probability p(Δ), delayed by a
/// uniform fraction of one TDC bin.
pub fn inject_crosstalk<R: Rng + ?Sized>(
    detections: &[Detection],
    spec: &CrosstalkSpec,
    geometry: SensorGeometry,
    tdc_bin_ps: f64,
    rng: &mut R,
) -> Vec<Detection> {
    let mut out = detections.to_vec();
    if spec.is_empty() {
        return out;
    }
    for d in detections {
        for ((dx, dy), p) in spec.iter() {
            if rng.random::<f64>() >= p {
                continue;
            }
            let delay = rng.random::<f64>() * tdc_bin_ps;
            let x = d.pixel.x as i32 + dx as i32;
            let y = d.pixel.y as i32 + dy as i32;
            if x < 1 || y < 1 || x > geometry.n_x as i32 || y > geometry.n_y as i32 {
                continue;
            }
            out.push(Detection {
                pixel: PixelCoord::new(x as u16, y as u16),
                time_ps: d.time_ps + delay,
                origin: Origin::Crosstalk,
            });
        }
    }
    out
}

/// TDC bins of both photons of every pair whose two detections survived as
/// first hits on distinct pixels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameTruth {
    pub pair_bins: Vec<(u8, u8)>,
}

const TAG_PAIRS: u64 = 1;
const TAG_DARK: u64 = 2;
const TAG_CROSSTALK: u64 = 3;

/// Monte Carlo frame generator. Every frame is a pure function of
/// `(seed, frame_id)`.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: DoubleGaussianModel,
    mapping: OpticalMapping,
    sensor: SensorConfig,
    crosstalk: CrosstalkSpec,
    pairs_per_frame: Option<Poisson<f64>>,
    dark_per_frame: Option<Poisson<f64>>,
    seed: u64,
}

impl Simulator {
    pub fn new(
        model: DoubleGaussianModel,
        mapping: OpticalMapping,
        sensor: SensorConfig,
        crosstalk: CrosstalkSpec,
        pairs_per_frame_mean: f64,
        seed: u64,
    ) -> Result<Self, SimError> {
        model.validate().map_err(|e| SimError::Config(e.to_string()))?;
        mapping.validate().map_err(|e| SimError::Config(e.to_string()))?;
        sensor.validate()?;
        if !(pairs_per_frame_mean >= 0.0) || !pairs_per_frame_mean.is_finite() {
            return Err(SimError::Config("pairs_per_frame_mean must be finite and >= 0".into()));
        }
        let poisson = |mean: f64| -> Result<Option<Poisson<f64>>, SimError> {
            if mean > 0.0 {
                Poisson::new(mean).map(Some).map_err(|e| SimError::Config(e.to_string()))
            } else {
                Ok(None)
            }
        };
        let dark_mean = sensor.dark_rate_hz * sensor.frame_duration_ps() * 1e-12 * sensor.geometry.n_pixels() as f64;
        Ok(Self {
            pairs_per_frame: poisson(pairs_per_frame_mean)?,
            dark_per_frame: poisson(dark_mean)?,
            model,
            mapping,
            sensor,
            crosstalk,
            seed,
        })
    }

    pub fn sensor(&self) -> &SensorConfig {
        &self.sensor
    }

    pub fn mapping(&self) -> &OpticalMapping {
        &self.mapping
    }

    pub fn model(&self) -> &DoubleGaussianModel {
        &self.model
    }

    fn substream(&self, frame_id: u32, tag: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(((frame_id as u64) << 8) | tag);
        rng
    }

    fn pixel_at(&self, rho_um: Vec2) -> Option<PixelCoord> {
        let g = self.sensor.geometry;
        let pitch = self.sensor.pixel_pitch_um;
        let u = rho_um[0] / pitch + g.n_x as f64 / 2.0 + self.mapping.center_offset_px[0];
        let v = rho_um[1] / pitch + g.n_y as f64 / 2.0 + self.mapping.center_offset_px[1];
        if u >= 0.0 && v >= 0.0 && u < g.n_x as f64 && v < g.n_y as f64 {
            Some(PixelCoord::new(u as u16 + 1, v as u16 + 1))
        } else {
            None
        }
    }

    pub fn frame(&self, frame_id: u32) -> Frame {
        self.generate(frame_id, None)
    }

    pub fn frame_with_truth(&self, frame_id: u32) -> (Frame, FrameTruth) {
        let mut truth = FrameTruth::default();
        let frame = self.generate(frame_id, Some(&mut truth));
        (frame, truth)
    }

    fn generate(&self, frame_id: u32, truth: Option<&mut FrameTruth>) -> Frame {
        let sensor = &self.sensor;
        let duration = sensor.frame_duration_ps();
        let mut detections: Vec<Detection> = Vec::new();

        if let Some(pairs) = &self.pairs_per_frame {
            let mut rng = self.substream(frame_id, TAG_PAIRS);
            let n_pairs = pairs.sample(&mut rng) as u32;
            for pair in 0..n_pairs {
                let t0 = rng.random::<f64>() * duration;
                let (r1, r2) = sample_pair(&self.model, &self.mapping, &mut rng);
                for rho in [r1, r2] {
                    let detected = rng.random::<f64>() < sensor.efficiency;
                    let jitter = normal(&mut rng) * sensor.jitter_sigma_ps;
                    if !detected {
                        continue;
                    }
                    let Some(pixel) = self.pixel_at(rho) else { continue };
                    let t = t0 + sensor.pixel_offsets_ps[sensor.geometry.flat(pixel)] + jitter;
                    if t >= 0.0 && t < duration {
                        detections.push(Detection { pixel, time_ps: t, origin: Origin::Pair(pair) });
                    }
                }
            }
        }

        if let Some(dark) = &self.dark_per_frame {
            let mut rng = self.substream(frame_id, TAG_DARK);
            let n_dark = dark.sample(&mut rng) as usize;
            let n_pixels = sensor.geometry.n_pixels();
            for _ in 0..n_dark {
                let pixel = sensor.geometry.unflat(rng.random_range(0..n_pixels));
                let t = rng.random::<f64>() * duration;
                detections.push(Detection { pixel, time_ps: t, origin: Origin::Dark });
            }
        }

        if !self.crosstalk.is_empty() && !detections.is_empty() {
            let mut rng = self.substream(frame_id, TAG_CROSSTALK);
            detections = inject_crosstalk(&detections, &self.crosstalk, sensor.geometry, sensor.tdc_bin_ps, &mut rng);
        }

        // First hit per pixel.
        detections.sort_by(|a, b| a.pixel.cmp(&b.pixel).then(a.time_ps.total_cmp(&b.time_ps)));
        detections.dedup_by(|later, first| later.pixel == first.pixel);

        let mut events = Vec::with_capacity(detections.len());
        let mut pair_hits: Vec<(u32, u8)> = Vec::new();
        for d in &detections {
            let Ok(tdc) = quantize_tdc(d.time_ps, sensor) else { continue };
            events.push(EventRecord { pixel: d.pixel, tdc });
            if let Origin::Pair(id) = d.origin {
                pair_hits.push((id, tdc));
            }
        }
        events.sort_by_key(|e| (e.pixel.y, e.pixel.x));

        if let Some(truth) = truth {
            pair_hits.sort_by_key(|&(id, _)| id);
            for w in pair_hits.windows(2) {
                if w[0].0 == w[1].0 {
                    truth.pair_bins.push((w[0].1, w[1].1));
                }
            }
        }
        Frame { frame_id, events }
    }

    /// Frames `range` in ascending id order, generated in parallel.
    pub fn frames(&self, range: Range<u32>) -> Vec<Frame> {
        range.into_par_iter().map(|id| self.frame(id)).collect()
    }

    /// Lazily yields frames `0..n_frames` in order, generating `chunk`
    /// frames at a time in parallel.
    pub fn stream(&self, n_frames: u32, chunk: u32) -> impl Iterator<Item = Frame> + '_ {
        let chunk = chunk.max(1);
        (0..n_frames.div_ceil(chunk)).flat_map(move |c| {
            let start = c * chunk;
            let end = start.saturating_add(chunk).min(n_frames);
            self.frames(start..end)
        })
    }
}
