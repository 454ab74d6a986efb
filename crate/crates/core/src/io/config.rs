//! Flat `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown and
//! repeated keys are rejected. Cross-talk entries use keys of the form
//! `xtalk.DX,DY`, e.g. `xtalk.1,0 = 1e-3`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use super::IoError;
use crate::correlator::{CrosstalkOptions, WindowConfig};
use crate::epr::Method;
use crate::geometry::SensorGeometry;
use crate::optics::{AxisWidths, DoubleGaussianModel};
use crate::pipeline::{AccidentalChoice, PipelineConfig};
use crate::sensor::{uniform_offsets, CrosstalkSpec, SensorConfig, DEFAULT_OFFSET_SEED};

/// `(key, default, unit, description)` for every accepted key except the
/// open-ended `xtalk.DX,DY` family.
pub const CONFIG_KEYS: &[(&str, &str, &str, &str)] = &[
    ("seed", "1", "-", "Master seed; the near-field run uses a fixed offset of it"),
    ("frames", "20000000", "frames", "Frames simulated per run"),
    ("pairs_per_frame", "6", "pairs", "Poisson mean of photon pairs generated per frame"),
    ("threads", "0", "-", "Worker threads, 0 = all cores"),
    ("chunk_frames", "65536", "frames", "Frames per parallel batch when writing or reading event files"),
    ("model.sigma_plus_x", "from targets", "1/mm", "σ of the x-axis centroid momentum q₊"),
    ("model.sigma_minus_x", "from targets", "1/mm", "σ of the x-axis difference momentum q₋"),
    ("model.sigma_plus_y", "from targets", "1/mm", "σ of the y-axis centroid momentum q₊"),
    ("model.sigma_minus_y", "from targets", "1/mm", "σ of the y-axis difference momentum q₋"),
    ("model.target_dx_um", "37.3", "µm", "Target Δ_min(x|x); solved into the x sigmas"),
    ("model.target_dqx", "4.0", "1/mm", "Target Δ_min(q_x|q_x)"),
    ("model.target_dy_um", "37.3", "µm", "Target Δ_min(y|y)"),
    ("model.target_dqy", "3.4", "1/mm", "Target Δ_min(q_y|q_y)"),
    ("near.magnification", "9", "-", "Near-field imaging magnification M"),
    ("near.center_offset_x_px", "0", "px", "Optical axis offset from the sensor centre, x"),
    ("near.center_offset_y_px", "0", "px", "Optical axis offset from the sensor centre, y"),
    ("far.focal_length_mm", "150", "mm", "Far-field lens focal length"),
    ("far.wavelength_nm", "810", "nm", "Photon wavelength for the far-field mapping"),
    ("far.center_offset_x_px", "0", "px", "Optical axis offset from the sensor centre, x"),
    ("far.center_offset_y_px", "0", "px", "Optical axis offset from the sensor centre, y"),
    ("sensor.n_x", "32", "px", "Pixel columns"),
    ("sensor.n_y", "32", "px", "Pixel rows"),
    ("sensor.pixel_pitch_um", "44.67", "µm", "Pixel pitch"),
    ("sensor.tdc_bin_ps", "205", "ps", "TDC bin width"),
    ("sensor.bins_per_frame", "255", "bins", "TDC bins per frame, at most 256"),
    ("sensor.efficiency", "0.5", "-", "Detection probability per incident photon"),
    ("sensor.dark_rate_hz", "1000", "Hz", "Dark count rate per pixel"),
    ("sensor.jitter_sigma_ps", "200", "ps", "Gaussian timing jitter per detection"),
    ("sensor.offset_half_width_ps", "400", "ps", "Per-pixel static offsets drawn uniformly from ±this"),
    ("sensor.offset_seed", "1592594421", "-", "Seed of the per-pixel offsets"),
    ("xtalk.nearest", "1e-3", "-", "Cross-talk probability to each of the four nearest neighbours"),
    ("correlate.window", "10", "bins", "Coincidence window |Δt| ≤ window"),
    ("correlate.shift", "21", "bins", "Centre of the shifted accidental window, or `none`"),
    ("correct.accidentals", "shifted", "-", "`shifted`, `g1product` or `none`"),
    ("correct.g1_mask_distance", "10", "px", "Chebyshev distance of the g1-product mask from the correlation locus"),
    ("correct.crosstalk", "estimate", "-", "`estimate` (from the far-field run) or `none`"),
    ("correct.crosstalk_inner", "29", "px", "Side of the centred cross-talk estimation window"),
    ("correct.crosstalk_ring", "4,6", "px", "Background ring `lo,hi` around each offset, or `none`"),
    ("correct.mask_radius", "1", "px", "Chebyshev radius of the neighbour mask, or `none`"),
    ("epr.column_threshold", "0.01", "-", "Columns below this fraction of the largest column total are dropped"),
    ("epr.methods", "numerical,gauss1d,gauss2d,peaks", "-", "Comma-separated EPR methods"),
    ("output.dir", ".", "path", "Directory for artifacts written by `pipeline`"),
];

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self { pipeline: PipelineConfig::default(), output_dir: PathBuf::from(".") }
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>, IoError> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| IoError::Config { line, message: format!("cannot parse `{v}` for `{key}`") }),
        }
    }

    fn optional_u16(&mut self, key: &str) -> Result<Option<Option<u16>>, IoError> {
        match self.take(key) {
            None => Ok(None),
            Some((_, v)) if v == "none" => Ok(Some(None)),
            Some((line, v)) => v
                .parse()
                .map(|x| Some(Some(x)))
                .map_err(|_| IoError::Config { line, message: format!("cannot parse `{v}` for `{key}`") }),
        }
    }
}

fn err(line: usize, message: impl Into<String>) -> IoError {
    IoError::Config { line, message: message.into() }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut map = BTreeMap::new();
        let mut xtalk_entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let (k, v) = s.split_once('=').ok_or_else(|| err(line, "expected `key = value`"))?;
            let (k, v) = (k.trim(), v.trim());
            if let Some(offset) = k.strip_prefix("xtalk.").filter(|o| o.contains(',')) {
                let (dx, dy) = offset.split_once(',').expect("contains a comma");
                let dx: i16 = dx.trim().parse().map_err(|_| err(line, format!("bad offset in `{k}`")))?;
                let dy: i16 = dy.trim().parse().map_err(|_| err(line, format!("bad offset in `{k}`")))?;
                let p: f64 = v.parse().map_err(|_| err(line, format!("cannot parse `{v}` for `{k}`")))?;
                if xtalk_entries.iter().any(|&(_, x, y, _)| (x, y) == (dx, dy)) {
                    return Err(err(line, format!("repeated key `{k}`")));
                }
                xtalk_entries.push((line, dx, dy, p));
                continue;
            }
            if !CONFIG_KEYS.iter().any(|(key, ..)| *key == k) {
                return Err(err(line, format!("unknown key `{k}`")));
            }
            if map.insert(k.to_string(), (line, v.to_string())).is_some() {
                return Err(err(line, format!("repeated key `{k}`")));
            }
        }
        let mut e = Entries { map };
        let mut cfg = RunConfig::default();
        let p = &mut cfg.pipeline;

        if let Some(v) = e.parse("seed")? {
            p.seed = v;
        }
        if let Some(v) = e.parse("frames")? {
            p.frames = v;
        }
        if let Some(v) = e.parse("pairs_per_frame")? {
            p.pairs_per_frame = v;
        }
        if let Some(v) = e.parse("threads")? {
            p.threads = v;
        }
        if let Some(v) = e.parse::<u32>("chunk_frames")? {
            p.chunk_frames = v.max(1);
        }

        p.model = parse_model(&mut e)?;

        if let Some(v) = e.parse("near.magnification")? {
            p.near.magnification = v;
        }
        if let Some(v) = e.parse("near.center_offset_x_px")? {
            p.near.center_offset_px[0] = v;
        }
        if let Some(v) = e.parse("near.center_offset_y_px")? {
            p.near.center_offset_px[1] = v;
        }
        if let Some(v) = e.parse("far.focal_length_mm")? {
            p.far.focal_length_mm = v;
        }
        if let Some(v) = e.parse("far.wavelength_nm")? {
            p.far.wavelength_nm = v;
        }
        if let Some(v) = e.parse("far.center_offset_x_px")? {
            p.far.center_offset_px[0] = v;
        }
        if let Some(v) = e.parse("far.center_offset_y_px")? {
            p.far.center_offset_px[1] = v;
        }
        p.near.wavelength_nm = p.far.wavelength_nm;
        p.near.focal_length_mm = p.far.focal_length_mm;
        for (m, name) in [(&p.near, "near"), (&p.far, "far")] {
            m.validate().map_err(|x| err(0, format!("{name} mapping: {x}")))?;
        }

        p.sensor = parse_sensor(&mut e)?;

        let mut xtalk = match e.parse::<f64>("xtalk.nearest")? {
            Some(v) => CrosstalkSpec::nearest_neighbors(v).map_err(|x| err(0, x.to_string()))?,
            None => p.crosstalk.clone(),
        };
        for (line, dx, dy, prob) in xtalk_entries {
            xtalk = xtalk.with(dx, dy, prob).map_err(|x| err(line, x.to_string()))?;
        }
        p.crosstalk = xtalk;

        let mut windows = WindowConfig::default();
        if let Some(v) = e.parse("correlate.window")? {
            windows.window = v;
        }
        if let Some(v) = e.optional_u16("correlate.shift")? {
            windows.shift = v;
        }
        windows.validate(p.sensor.bins_per_frame).map_err(|x| err(0, x.to_string()))?;
        p.windows = windows;

        let g1_distance = e.parse::<u16>("correct.g1_mask_distance")?.unwrap_or(10);
        p.corrections.accidentals = match e.take("correct.accidentals") {
            None => AccidentalChoice::ShiftedWindow,
            Some((_, v)) if v == "shifted" => AccidentalChoice::ShiftedWindow,
            Some((_, v)) if v == "g1product" => AccidentalChoice::G1Product(g1_distance),
            Some((_, v)) if v == "none" => AccidentalChoice::None,
            Some((line, v)) => return Err(err(line, format!("unknown accidental method `{v}`"))),
        };
        if p.corrections.accidentals == AccidentalChoice::ShiftedWindow && p.windows.shift.is_none() {
            return Err(err(0, "shifted accidental estimation needs correlate.shift"));
        }
        let mut xopts = CrosstalkOptions::default();
        if let Some(v) = e.parse("correct.crosstalk_inner")? {
            xopts.inner_window = v;
        }
        if let Some((line, v)) = e.take("correct.crosstalk_ring") {
            xopts.background_ring = if v == "none" {
                None
            } else {
                let (lo, hi) = v.split_once(',').ok_or_else(|| err(line, "ring must be `lo,hi` or `none`"))?;
                let lo: u16 = lo.trim().parse().map_err(|_| err(line, "bad ring bound"))?;
                let hi: u16 = hi.trim().parse().map_err(|_| err(line, "bad ring bound"))?;
                if lo == 0 || hi < lo {
                    return Err(err(line, "ring needs 1 ≤ lo ≤ hi"));
                }
                Some((lo, hi))
            };
        }
        p.corrections.crosstalk = match e.take("correct.crosstalk") {
            None => Some(xopts),
            Some((_, v)) if v == "estimate" => Some(xopts),
            Some((_, v)) if v == "none" => None,
            Some((line, v)) => return Err(err(line, format!("unknown cross-talk option `{v}`"))),
        };
        if p.corrections.crosstalk.is_some() && p.corrections.accidentals == AccidentalChoice::None {
            return Err(err(0, "cross-talk estimation requires accidental subtraction"));
        }
        if let Some(v) = e.optional_u16("correct.mask_radius")? {
            p.corrections.mask_radius = v;
        }

        if let Some(v) = e.parse::<f64>("epr.column_threshold")? {
            if !(0.0..1.0).contains(&v) {
                return Err(err(0, "epr.column_threshold must lie in [0, 1)"));
            }
            p.column_threshold = v;
        }
        if let Some((line, v)) = e.take("epr.methods") {
            let mut methods = Vec::new();
            for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                let m = Method::parse(name).ok_or_else(|| err(line, format!("unknown method `{name}`")))?;
                if !methods.contains(&m) {
                    methods.push(m);
                }
            }
            if methods.is_empty() {
                return Err(err(line, "no EPR method selected"));
            }
            p.methods = methods;
        }
        if let Some((_, v)) = e.take("output.dir") {
            cfg.output_dir = PathBuf::from(v);
        }
        debug_assert!(e.map.is_empty(), "unhandled keys {:?}", e.map.keys());
        Ok(cfg)
    }
}

fn parse_model(e: &mut Entries) -> Result<DoubleGaussianModel, IoError> {
    let sigma_keys = ["model.sigma_plus_x", "model.sigma_minus_x", "model.sigma_plus_y", "model.sigma_minus_y"];
    let target_keys = ["model.target_dx_um", "model.target_dqx", "model.target_dy_um", "model.target_dqy"];
    let mut sigmas = [None; 4];
    for (slot, key) in sigmas.iter_mut().zip(sigma_keys) {
        *slot = e.parse::<f64>(key)?;
    }
    let mut targets = [None; 4];
    for (slot, key) in targets.iter_mut().zip(target_keys) {
        *slot = e.parse::<f64>(key)?;
    }
    let any_sigma = sigmas.iter().any(Option::is_some);
    if any_sigma && targets.iter().any(Option::is_some) {
        return Err(err(0, "give either model sigmas or model targets, not both"));
    }
    let model = if any_sigma {
        let [Some(px), Some(mx), Some(py), Some(my)] = sigmas else {
            return Err(err(0, "all four model sigmas are required"));
        };
        DoubleGaussianModel::new(
            AxisWidths { sigma_plus: px, sigma_minus: mx },
            AxisWidths { sigma_plus: py, sigma_minus: my },
        )
    } else {
        let [dx, dqx, dy, dqy] = [
            targets[0].unwrap_or(37.3),
            targets[1].unwrap_or(4.0),
            targets[2].unwrap_or(37.3),
            targets[3].unwrap_or(3.4),
        ];
        AxisWidths::from_conditional_targets(dx, dqx)
            .and_then(|x| Ok((x, AxisWidths::from_conditional_targets(dy, dqy)?)))
            .and_then(|(x, y)| DoubleGaussianModel::new(x, y))
    };
    model.map_err(|x| err(0, x.to_string()))
}

fn parse_sensor(e: &mut Entries) -> Result<SensorConfig, IoError> {
    let mut s = SensorConfig::default();
    let mut geometry = s.geometry;
    if let Some(v) = e.parse("sensor.n_x")? {
        geometry.n_x = v;
    }
    if let Some(v) = e.parse("sensor.n_y")? {
        geometry.n_y = v;
    }
    s.geometry = SensorGeometry::new(geometry.n_x, geometry.n_y);
    if let Some(v) = e.parse("sensor.pixel_pitch_um")? {
        s.pixel_pitch_um = v;
    }
    if let Some(v) = e.parse("sensor.tdc_bin_ps")? {
        s.tdc_bin_ps = v;
    }
    if let Some(v) = e.parse("sensor.bins_per_frame")? {
        s.bins_per_frame = v;
    }
    if let Some(v) = e.parse("sensor.efficiency")? {
        s.efficiency = v;
    }
    if let Some(v) = e.parse("sensor.dark_rate_hz")? {
        s.dark_rate_hz = v;
    }
    if let Some(v) = e.parse("sensor.jitter_sigma_ps")? {
        s.jitter_sigma_ps = v;
    }
    let half = e.parse::<f64>("sensor.offset_half_width_ps")?.unwrap_or(400.0);
    let seed = e.parse::<u64>("sensor.offset_seed")?.unwrap_or(DEFAULT_OFFSET_SEED);
    if !(half >= 0.0) || !half.is_finite() {
        return Err(err(0, "sensor.offset_half_width_ps must be finite and >= 0"));
    }
    s.pixel_offsets_ps = uniform_offsets(s.geometry, half, seed);
    s.validate().map_err(|x| err(0, x.to_string()))?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_defaults() {
        let c = RunConfig::parse("# nothing\n\n").unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn default_offset_seed_matches_table() {
        let row = CONFIG_KEYS.iter().find(|r| r.0 == "sensor.offset_seed").unwrap();
        assert_eq!(row.1.parse::<u64>().unwrap(), DEFAULT_OFFSET_SEED);
    }

    #[test]
    fn unknown_and_repeated_keys_rejected() {
        assert!(matches!(RunConfig::parse("bogus = 1"), Err(IoError::Config { line: 1, .. })));
        assert!(matches!(RunConfig::parse("seed = 1\nseed = 2"), Err(IoError::Config { line: 2, .. })));
        assert!(RunConfig::parse("seed 1").is_err());
        assert!(RunConfig::parse("seed = x").is_err());
    }

    #[test]
    fn values_are_applied() {
        let text = "seed = 9\nframes = 1000\nsensor.efficiency = 0.25\nxtalk.nearest = 0\nxtalk.1,0 = 1e-3\n\
                    xtalk.0,1 = 5e-4\ncorrelate.shift = none\ncorrect.accidentals = g1product\n\
                    correct.mask_radius = none\nepr.methods = gauss2d, peaks\n";
        let c = RunConfig::parse(text).unwrap().pipeline;
        assert_eq!(c.seed, 9);
        assert_eq!(c.frames, 1000);
        assert_eq!(c.sensor.efficiency, 0.25);
        assert_eq!(c.crosstalk.get(1, 0), 1e-3);
        assert_eq!(c.crosstalk.get(0, 1), 5e-4);
        assert_eq!(c.crosstalk.get(-1, 0), 0.0);
        assert_eq!(c.windows.shift, None);
        assert_eq!(c.corrections.accidentals, AccidentalChoice::G1Product(10));
        assert_eq!(c.corrections.mask_radius, None);
        assert_eq!(c.methods, vec![Method::Gauss2d, Method::Peaks]);
    }

    #[test]
    fn inconsistent_settings_rejected() {
        assert!(RunConfig::parse("correlate.shift = none").is_err());
        assert!(RunConfig::parse("correlate.shift = 15").is_err());
        assert!(RunConfig::parse("model.sigma_plus_x = 3").is_err());
        assert!(RunConfig::parse("model.target_dx_um = 200").is_err());
        assert!(RunConfig::parse("sensor.efficiency = 2").is_err());
        assert!(RunConfig::parse("xtalk.0,0 = 0.1").is_err());
        assert!(RunConfig::parse("correct.accidentals = none").is_err());
    }
}
