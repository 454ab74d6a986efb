//! End-to-end runs: simulate, accumulate, correct and evaluate.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlator::{
    correct_crosstalk, estimate_accidentals, estimate_crosstalk, mask_neighbors, normalize, project_axes,
    project_sum_diff, subtract_accidentals, AccidentalMethod, CorrectedG2, CorrelationAccumulator, CorrelationLocus,
    CorrelatorError, CrosstalkMap, CrosstalkOptions, Provenance, WindowConfig,
};
use crate::epr::{
    self, compile_report, peak_method, peak_profile, AxisEstimates, AxisKind, EprError, EprReport, JointTable, Method,
    PeakCoordinate, DEFAULT_COLUMN_THRESHOLD,
};
use crate::geometry::SensorGeometry;
use crate::optics::{predict_epr, DoubleGaussianModel, MappingMode, OpticalMapping};
use crate::sensor::{CrosstalkSpec, Frame, SensorConfig, SimError, Simulator};

/// Added to the seed for the near-field run so the two runs draw
/// independent streams.
pub const NEAR_FIELD_SEED_OFFSET: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AccidentalChoice {
    None,
    ShiftedWindow,
    /// g1-product with the uncorrelated mask at this Chebyshev distance.
    G1Product(u16),
}

impl AccidentalChoice {
    pub fn method(self, mode: MappingMode) -> Option<AccidentalMethod> {
        match self {
            AccidentalChoice::None => None,
            AccidentalChoice::ShiftedWindow => Some(AccidentalMethod::ShiftedWindow),
            AccidentalChoice::G1Product(min_distance) => Some(AccidentalMethod::G1Product {
                locus: match mode {
                    MappingMode::NearField => CorrelationLocus::Diagonal,
                    MappingMode::FarField => CorrelationLocus::AntiDiagonal,
                },
                min_distance,
            }),
        }
    }
}

/// Correction stages applied after normalisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionOptions {
    pub accidentals: AccidentalChoice,
    /// Estimate cross-talk from the far-field run and correct both runs.
    pub crosstalk: Option<CrosstalkOptions>,
    pub mask_radius: Option<u16>,
}

impl Default for CorrectionOptions {
    fn default() -> Self {
        Self {
            accidentals: AccidentalChoice::ShiftedWindow,
            crosstalk: Some(CrosstalkOptions::default()),
            mask_radius: Some(1),
        }
    }
}

/// Everything an end-to-end run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub frames: u32,
    pub pairs_per_frame: f64,
    pub model: DoubleGaussianModel,
    pub near: OpticalMapping,
    pub far: OpticalMapping,
    pub sensor: SensorConfig,
    pub crosstalk: CrosstalkSpec,
    pub windows: WindowConfig,
    pub corrections: CorrectionOptions,
    pub column_threshold: f64,
    pub methods: Vec<Method>,
    /// Frames generated per parallel batch when streaming to a file.
    pub chunk_frames: u32,
    /// Worker threads; 0 uses all cores.
    pub threads: usize,
}

/// Default mean number of pairs generated per frame.
pub const DEFAULT_PAIRS_PER_FRAME: f64 = 6.0;

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            frames: 20_000_000,
            pairs_per_frame: DEFAULT_PAIRS_PER_FRAME,
            model: DoubleGaussianModel::reference_source(),
            near: OpticalMapping::near_field(9.0),
            far: OpticalMapping::far_field(150.0, 810.0),
            sensor: SensorConfig::default(),
            crosstalk: CrosstalkSpec::nearest_neighbors(1e-3).expect("valid probability"),
            windows: WindowConfig::default(),
            corrections: CorrectionOptions::default(),
            column_threshold: DEFAULT_COLUMN_THRESHOLD,
            methods: Method::ALL.to_vec(),
            chunk_frames: 1 << 16,
            threads: 0,
        }
    }
}

impl PipelineConfig {
    pub fn simulator(&self, mode: MappingMode) -> Result<Simulator, SimError> {
        let (mapping, seed) = match mode {
            MappingMode::FarField => (self.far, self.seed),
            MappingMode::NearField => (self.near, self.seed.wrapping_add(NEAR_FIELD_SEED_OFFSET)),
        };
        Simulator::new(self.model, mapping, self.sensor.clone(), self.crosstalk.clone(), self.pairs_per_frame, seed)
    }

    pub fn mapping(&self, mode: MappingMode) -> OpticalMapping {
        match mode {
            MappingMode::NearField => self.near,
            MappingMode::FarField => self.far,
        }
    }
}

/// Simulate frames `0..n_frames` and accumulate them in parallel. The
/// result does not depend on the number of worker threads.
pub fn simulate_and_accumulate(
    sim: &Simulator,
    n_frames: u32,
    windows: WindowConfig,
) -> Result<CorrelationAccumulator, CorrelatorError> {
    let sensor = sim.sensor();
    let empty = CorrelationAccumulator::new(sensor.geometry, sensor.bins_per_frame, windows)?;
    let acc = (0..n_frames)
        .into_par_iter()
        .with_min_len(1 << 14)
        .try_fold(
            || empty.empty_like(),
            |mut acc, id| {
                acc.add_frame(&sim.frame(id))?;
                Ok(acc)
            },
        )
        .try_reduce_with(|a, b| a.merge(b))
        .transpose()?;
    Ok(acc.unwrap_or(empty))
}

/// Accumulate a slice of frames in parallel. The result does not depend on
/// the number of worker threads.
pub fn accumulate_parallel(
    frames: &[Frame],
    geometry: SensorGeometry,
    bins_per_frame: u16,
    windows: WindowConfig,
) -> Result<CorrelationAccumulator, CorrelatorError> {
    let empty = CorrelationAccumulator::new(geometry, bins_per_frame, windows)?;
    let acc = frames
        .par_iter()
        .with_min_len(1 << 12)
        .try_fold(
            || empty.empty_like(),
            |mut acc, f| {
                acc.add_frame(f)?;
                Ok(acc)
            },
        )
        .try_reduce_with(|a, b| a.merge(b))
        .transpose()?;
    Ok(acc.unwrap_or(empty))
}

/// Apply accidental subtraction, then cross-talk correction with `map`.
/// Masking is left to the caller so the cross-talk map can be estimated
/// from the unmasked far-field tensor first.
pub fn subtract_and_correct(
    acc: &CorrelationAccumulator,
    accidentals: Option<AccidentalMethod>,
    map: Option<&CrosstalkMap>,
) -> Result<CorrectedG2, CorrelatorError> {
    let mut g2 = normalize(acc)?;
    if let Some(method) = accidentals {
        let est = estimate_accidentals(acc, method)?;
        g2 = subtract_accidentals(&g2, &est)?;
    }
    if let Some(map) = map {
        let g1 = g2.g1().to_vec();
        g2 = correct_crosstalk(&g2, &g1, map)?;
    }
    Ok(g2)
}

/// Corrected tensors of a near-field/far-field pair of runs.
#[derive(Debug, Clone)]
pub struct CorrectedRuns {
    pub near: CorrectedG2,
    pub far: CorrectedG2,
    pub crosstalk: Option<CrosstalkMap>,
}

pub fn correct_runs(
    near: &CorrelationAccumulator,
    far: &CorrelationAccumulator,
    options: &CorrectionOptions,
) -> Result<CorrectedRuns, CorrelatorError> {
    let far_acc = options.accidentals.method(MappingMode::FarField);
    let near_acc = options.accidentals.method(MappingMode::NearField);
    let mut far_g2 = subtract_and_correct(far, far_acc, None)?;
    let map = match options.crosstalk {
        Some(opts) if far_acc.is_some() => {
            let map = estimate_crosstalk(&far_g2, far_g2.g1(), opts)?;
            let g1 = far_g2.g1().to_vec();
            far_g2 = correct_crosstalk(&far_g2, &g1, &map)?;
            Some(map)
        }
        Some(_) => return Err(CorrelatorError::Config("cross-talk correction requires accidental subtraction".into())),
        None => None,
    };
    let mut near_g2 = subtract_and_correct(near, near_acc, map.as_ref())?;
    if let Some(r) = options.mask_radius {
        far_g2 = mask_neighbors(&far_g2, r);
        near_g2 = mask_neighbors(&near_g2, r);
    }
    Ok(CorrectedRuns { near: near_g2, far: far_g2, crosstalk: map })
}

pub fn provenance_labels(p: Provenance) -> Vec<String> {
    p.iter_names().map(|(name, _)| name.to_ascii_lowercase()).collect()
}

/// Per-axis joint tables of one corrected run.
pub fn axis_tables(
    g2: &CorrectedG2,
    mapping: &OpticalMapping,
    pixel_pitch_um: f64,
) -> Result<[JointTable; 2], EprError> {
    let (px, py) = project_axes(g2);
    let kind = match mapping.mode {
        MappingMode::NearField => AxisKind::Position,
        MappingMode::FarField => AxisKind::Momentum,
    };
    let scale = mapping.object_units_per_pixel(pixel_pitch_um);
    let count_scale = g2.n_frames() as f64 / 1e6;
    Ok([
        JointTable::from_projection(&px, g2.mask_radius(), kind, scale, count_scale)?,
        JointTable::from_projection(&py, g2.mask_radius(), kind, scale, count_scale)?,
    ])
}

/// Inputs and options for [`evaluate`].
#[derive(Debug, Clone)]
pub struct EvaluationInput<'a> {
    pub near: &'a CorrectedG2,
    pub far: &'a CorrectedG2,
    pub near_mapping: OpticalMapping,
    pub far_mapping: OpticalMapping,
    pub pixel_pitch_um: f64,
    pub column_threshold: f64,
    pub methods: &'a [Method],
    pub expected: Option<DoubleGaussianModel>,
}

/// Report plus the methods that failed, as `(axis, method, reason)`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EprReport,
    pub failures: Vec<(usize, Method, String)>,
}

pub fn evaluate(input: &EvaluationInput<'_>) -> Result<Evaluation, EprError> {
    let near_tables = axis_tables(input.near, &input.near_mapping, input.pixel_pitch_um)?;
    let far_tables = axis_tables(input.far, &input.far_mapping, input.pixel_pitch_um)?;
    let near_proj = project_sum_diff(input.near);
    let far_proj = project_sum_diff(input.far);
    let near_scale = input.near_mapping.object_units_per_pixel(input.pixel_pitch_um);
    let far_scale = input.far_mapping.object_units_per_pixel(input.pixel_pitch_um);

    let mut diagnostics = BTreeMap::new();
    let mut failures = Vec::new();
    let mut axes = [AxisEstimates::default(), AxisEstimates::default()];
    let threshold = input.column_threshold;
    for axis in 0..2 {
        let (nt, ft) = (&near_tables[axis], &far_tables[axis]);
        let name = ["x", "y"][axis];
        for &method in input.methods {
            let result: Result<(f64, f64), EprError> = match method {
                Method::Numerical => epr::numerical(nt, threshold).and_then(|p| {
                    let q = epr::numerical(ft, threshold)?;
                    diagnostics.insert(format!("{name}.near.dropped_columns"), p.dropped_columns as f64);
                    diagnostics.insert(format!("{name}.far.dropped_columns"), q.dropped_columns as f64);
                    diagnostics.insert(format!("{name}.near.floored_cells"), p.floored_cells as f64);
                    diagnostics.insert(format!("{name}.far.floored_cells"), q.floored_cells as f64);
                    Ok((p.delta2, q.delta2))
                }),
                Method::Gauss1d => epr::gauss1d(nt, threshold).and_then(|p| {
                    let q = epr::gauss1d(ft, threshold)?;
                    diagnostics.insert(format!("{name}.near.gauss1d_dropped_columns"), p.dropped_columns as f64);
                    diagnostics.insert(format!("{name}.far.gauss1d_dropped_columns"), q.dropped_columns as f64);
                    Ok((p.delta2, q.delta2))
                }),
                Method::Gauss2d => epr::gauss2d(nt).and_then(|p| {
                    let q = epr::gauss2d(ft)?;
                    diagnostics.insert(format!("{name}.near.gauss2d_sigma_plus_px"), p.sigma_plus_px);
                    diagnostics.insert(format!("{name}.near.gauss2d_sigma_minus_px"), p.sigma_minus_px);
                    diagnostics.insert(format!("{name}.far.gauss2d_sigma_plus_px"), q.sigma_plus_px);
                    diagnostics.insert(format!("{name}.far.gauss2d_sigma_minus_px"), q.sigma_minus_px);
                    Ok((p.delta2, q.delta2))
                }),
                Method::Peaks => {
                    let np = peak_profile(&near_proj.diff, axis, PeakCoordinate::Difference, input.near.mask_radius());
                    let fp = peak_profile(&far_proj.sum, axis, PeakCoordinate::Sum, input.far.mask_radius());
                    peak_method(&np, near_scale, input.near.n_frames() as f64 / 1e6).and_then(|p| {
                        let q = peak_method(&fp, far_scale, input.far.n_frames() as f64 / 1e6)?;
                        diagnostics.insert(format!("{name}.near.peak_sigma_px"), p.sigma_px);
                        diagnostics.insert(format!("{name}.far.peak_sigma_px"), q.sigma_px);
                        Ok((p.delta * p.delta, q.delta * q.delta))
                    })
                }
            };
            match result {
                Ok((p, q)) => axes[axis].insert(method, p, q),
                Err(e) => {
                    log::warn!("{name}: method {} failed: {e}", method.label());
                    failures.push((axis, method, e.to_string()));
                }
            }
        }
    }
    let mut provenance = BTreeMap::new();
    provenance.insert("near".to_string(), provenance_labels(input.near.provenance()));
    provenance.insert("far".to_string(), provenance_labels(input.far.provenance()));
    let [x, y] = axes;
    let report = compile_report(x, y, input.expected.as_ref().map(predict_epr), provenance, diagnostics);
    Ok(Evaluation { report, failures })
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Correlator(#[from] CorrelatorError),
    #[error(transparent)]
    Epr(#[from] EprError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
}

/// Artifacts of a closed-loop run.
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub near_acc: CorrelationAccumulator,
    pub far_acc: CorrelationAccumulator,
    pub corrected: CorrectedRuns,
    pub evaluation: Evaluation,
}

/// Simulate both runs, correct them and evaluate all requested methods.
pub fn run_closed_loop(config: &PipelineConfig) -> Result<ClosedLoop, PipelineError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| PipelineError::ThreadPool(e.to_string()))?;
    pool.install(|| {
        let far_sim = config.simulator(MappingMode::FarField)?;
        let near_sim = config.simulator(MappingMode::NearField)?;
        let far_acc = simulate_and_accumulate(&far_sim, config.frames, config.windows)?;
        let near_acc = simulate_and_accumulate(&near_sim, config.frames, config.windows)?;
        let corrected = correct_runs(&near_acc, &far_acc, &config.corrections)?;
        let evaluation = evaluate(&EvaluationInput {
            near: &corrected.near,
            far: &corrected.far,
            near_mapping: config.near,
            far_mapping: config.far,
            pixel_pitch_um: config.sensor.pixel_pitch_um,
            column_threshold: config.column_threshold,
            methods: &config.methods,
            expected: Some(config.model),
        })?;
        Ok(ClosedLoop { near_acc, far_acc, corrected, evaluation })
    })
}
