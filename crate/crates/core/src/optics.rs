//! Two-photon joint densities and optical mappings for SPDC pairs.
//!
//! Momenta are in 1/mm, crystal-plane positions in µm, sensor-plane
//! positions in µm. Densities are unnormalized: the overall JSA prefactor
//! (χ⁽²⁾, field normalizations, 1/n factors) is a positive constant and is
//! dropped everywhere, since every consumer normalizes.
//!
//! # Double-Gaussian convention
//!
//! The joint momentum *density* of one transverse axis is
//!
//! ```text
//! exp(-q₊² / 2σ_q+²) · exp(-q₋² / 2σ_q−²),   q± = (q1 ± q2)/√2
//! ```
//!
//! i.e. the quoted widths are standard deviations of the density, not of the
//! amplitude. For a pure Gaussian state the amplitude is the square root of
//! this density and its Fourier transform is again Gaussian in the conjugate
//! rotated coordinates x± = (x1 ± x2)/√2, giving position-density widths
//! `σ_x± = 1/(2·σ_q±)`. A narrow q₊ (momentum anti-correlation, set by the
//! pump) therefore maps onto a broad x₊, and a broad q₋ onto a narrow x₋
//! (position correlation).

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Speed of light in µm/s.
pub const SPEED_OF_LIGHT_UM_PER_S: f64 = 2.997_924_58e14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("transverse momentum beyond the evanescent cutoff (square-root argument {0:.3e} < 0)")]
    EvanescentInput(f64),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("target variances give V = {0:.4} > 1/4; no pure double-Gaussian state reaches it")]
    UnattainableTarget(f64),
}

/// A transverse 2-vector (x, y).
pub type Vec2 = [f64; 2];

fn norm_sq(v: Vec2) -> f64 {
    v[0] * v[0] + v[1] * v[1]
}

type IndexFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Material dispersion and quasi-phase-matching geometry.
#[derive(Clone)]
pub struct DispersionModel {
    refractive_index: IndexFn,
    /// Pump centre angular frequency, rad/s.
    pub pump_center_frequency: f64,
    /// Poling period G, µm.
    pub poling_period_um: f64,
    /// Crystal length L, mm.
    pub crystal_length_mm: f64,
}

impl fmt::Debug for DispersionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DispersionModel")
            .field("pump_center_frequency", &self.pump_center_frequency)
            .field("poling_period_um", &self.poling_period_um)
            .field("crystal_length_mm", &self.crystal_length_mm)
            .finish_non_exhaustive()
    }
}

impl DispersionModel {
    pub fn new<F>(
        refractive_index: F,
        pump_center_frequency: f64,
        poling_period_um: f64,
        crystal_length_mm: f64,
    ) -> Result<Self, OpticsError>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if !(poling_period_um > 0.0) {
            return Err(OpticsError::InvalidModel("poling period must be > 0".into()));
        }
        if !(crystal_length_mm > 0.0) {
            return Err(OpticsError::InvalidModel("crystal length must be > 0".into()));
        }
        if !(pump_center_frequency > 0.0) {
            return Err(OpticsError::InvalidModel("pump frequency must be > 0".into()));
        }
        Ok(Self {
            refractive_index: Arc::new(refractive_index),
            pump_center_frequency,
            poling_period_um,
            crystal_length_mm,
        })
    }

    /// Dispersionless medium with index `n0`.
    pub fn constant_index(
        n0: f64,
        pump_center_frequency: f64,
        poling_period_um: f64,
        crystal_length_mm: f64,
    ) -> Result<Self, OpticsError> {
        if !(n0 > 1.0) {
            return Err(OpticsError::InvalidModel("refractive index must be > 1".into()));
        }
        Self::new(move |_| n0, pump_center_frequency, poling_period_um, crystal_length_mm)
    }

    /// Piecewise-linear interpolation of `(ω, n)` samples, clamped at the ends.
    pub fn tabulated(
        mut samples: Vec<(f64, f64)>,
        pump_center_frequency: f64,
        poling_period_um: f64,
        crystal_length_mm: f64,
    ) -> Result<Self, OpticsError> {
        if samples.is_empty() {
            return Err(OpticsError::InvalidModel("empty dispersion table".into()));
        }
        if samples.iter().any(|&(w, n)| !w.is_finite() || !(n > 1.0)) {
            return Err(OpticsError::InvalidModel("tabulated index must be finite and > 1".into()));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        let table = samples;
        let index = move |w: f64| {
            let i = table.partition_point(|&(x, _)| x < w);
            if i == 0 {
                return table[0].1;
            }
            if i == table.len() {
                return table[table.len() - 1].1;
            }
            let (x0, n0) = table[i - 1];
            let (x1, n1) = table[i];
            if x1 == x0 {
                n0
            } else {
                n0 + (n1 - n0) * (w - x0) / (x1 - x0)
            }
        };
        Self::new(index, pump_center_frequency, poling_period_um, crystal_length_mm)
    }

    pub fn refractive_index(&self, omega: f64) -> f64 {
        (self.refractive_index)(omega)
    }

    /// Wavenumber n(ω)·ω/c in 1/µm.
    pub fn wavenumber(&self, omega: f64) -> f64 {
        self.refractive_index(omega) * omega / SPEED_OF_LIGHT_UM_PER_S
    }
}

/// Phase mismatch Δk_z (1/µm) for photon 1 at ω_cp − ω2 with transverse
/// momentum `q1` and photon 2 at ω2 with `q2`. Momenta in 1/mm.
pub fn evaluate_delta_kz(q1: Vec2, q2: Vec2, omega2: f64, disp: &DispersionModel) -> Result<f64, OpticsError> {
    const PER_MM_TO_PER_UM: f64 = 1e-3;
    let q1 = [q1[0] * PER_MM_TO_PER_UM, q1[1] * PER_MM_TO_PER_UM];
    let q2 = [q2[0] * PER_MM_TO_PER_UM, q2[1] * PER_MM_TO_PER_UM];
    let qp = [q1[0] + q2[0], q1[1] + q2[1]];
    let omega1 = disp.pump_center_frequency - omega2;

    let longitudinal = |k: f64, q_sq: f64| {
        let arg = k * k - q_sq;
        if arg < 0.0 {
            Err(OpticsError::EvanescentInput(arg))
        } else {
            Ok(arg.sqrt())
        }
    };
    let k1 = longitudinal(disp.wavenumber(omega1), norm_sq(q1))?;
    let k2 = longitudinal(disp.wavenumber(omega2), norm_sq(q2))?;
    let kp = longitudinal(disp.wavenumber(disp.pump_center_frequency), norm_sq(qp))?;
    Ok(k1 + k2 - kp + 2.0 * PI / disp.poling_period_um)
}

/// Transverse pump amplitude in momentum space.
#[derive(Clone)]
pub enum PumpProfile {
    /// Gaussian beam with intensity waists (1/e² radius) in µm.
    Gaussian { w0x_um: f64, w0y_um: f64 },
    /// Arbitrary |E_p(q)|, q in 1/mm.
    Custom(Arc<dyn Fn(Vec2) -> f64 + Send + Sync>),
}

impl fmt::Debug for PumpProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { w0x_um, w0y_um } => {
                f.debug_struct("Gaussian").field("w0x_um", w0x_um).field("w0y_um", w0y_um).finish()
            }
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl PumpProfile {
    /// |E_p(q)|, peak value 1 for the Gaussian profile.
    pub fn amplitude(&self, q: Vec2) -> f64 {
        match self {
            Self::Gaussian { w0x_um, w0y_um } => {
                let wx = w0x_um * 1e-3;
                let wy = w0y_um * 1e-3;
                (-(q[0] * q[0] * wx * wx + q[1] * q[1] * wy * wy) / 4.0).exp()
            }
            Self::Custom(f) => f(q),
        }
    }
}

/// Widths of the joint momentum density along one transverse axis, 1/mm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisWidths {
    pub sigma_plus: f64,
    pub sigma_minus: f64,
}

impl AxisWidths {
    fn validate(&self) -> Result<(), OpticsError> {
        if self.sigma_plus > 0.0
            && self.sigma_minus > 0.0
            && self.sigma_plus.is_finite()
            && self.sigma_minus.is_finite()
        {
            Ok(())
        } else {
            Err(OpticsError::InvalidModel(format!("widths must be finite and > 0: {self:?}")))
        }
    }

    /// Momentum widths whose minimum inferred deviations are `delta_pos_um`
    /// (position, µm) and `delta_mom` (momentum, 1/mm). Picks the
    /// anti-correlated branch σ_q+ ≤ σ_q−.
    pub fn from_conditional_targets(delta_pos_um: f64, delta_mom: f64) -> Result<Self, OpticsError> {
        if !(delta_pos_um > 0.0 && delta_mom > 0.0) {
            return Err(OpticsError::InvalidModel("targets must be > 0".into()));
        }
        let dx2 = (delta_pos_um * 1e-3).powi(2);
        let dq2 = delta_mom * delta_mom;
        let v = dx2 * dq2;
        if v > 0.25 {
            return Err(OpticsError::UnattainableTarget(v));
        }
        // Δ²_x = 1/(2(a²+b²)), Δ²_q = 2a²b²/(a²+b²) with a = σ_q+, b = σ_q−.
        let sum = 0.5 / dx2;
        let product = dq2 * sum / 2.0;
        let disc = (sum * sum - 4.0 * product).max(0.0).sqrt();
        let small = (sum - disc) / 2.0;
        let large = (sum + disc) / 2.0;
        Ok(Self { sigma_plus: small.sqrt(), sigma_minus: large.sqrt() })
    }
}

/// Gaussian approximation of the SPDC joint transverse-momentum density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoubleGaussianModel {
    pub x: AxisWidths,
    pub y: AxisWidths,
}

impl DoubleGaussianModel {
    pub fn new(x: AxisWidths, y: AxisWidths) -> Result<Self, OpticsError> {
        let model = Self { x, y };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        self.x.validate()?;
        self.y.validate()
    }

    /// Model reproducing the source-parameter estimates of the reference
    /// setup: Δ(x|x) = Δ(y|y) = 37.3 µm, Δ(q_x|q_x) = 4.0 /mm,
    /// Δ(q_y|q_y) = 3.4 /mm.
    pub fn reference_source() -> Self {
        Self {
            x: AxisWidths::from_conditional_targets(37.3, 4.0).expect("valid targets"),
            y: AxisWidths::from_conditional_targets(37.3, 3.4).expect("valid targets"),
        }
    }

    fn axis_density(w: &AxisWidths, q1: f64, q2: f64) -> f64 {
        let qp = (q1 + q2) / SQRT_2;
        let qm = (q1 - q2) / SQRT_2;
        (-qp * qp / (2.0 * w.sigma_plus * w.sigma_plus) - qm * qm / (2.0 * w.sigma_minus * w.sigma_minus)).exp()
    }

    /// Density factor of the x axis alone.
    pub fn density_x(&self, q1x: f64, q2x: f64) -> f64 {
        Self::axis_density(&self.x, q1x, q2x)
    }

    pub fn density_y(&self, q1y: f64, q2y: f64) -> f64 {
        Self::axis_density(&self.y, q1y, q2y)
    }

    pub fn density(&self, q1: Vec2, q2: Vec2) -> f64 {
        self.density_x(q1[0], q2[0]) * self.density_y(q1[1], q2[1])
    }
}

/// Position-density widths (µm) of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionWidths {
    pub sigma_plus_um: f64,
    pub sigma_minus_um: f64,
}

impl PositionWidths {
    /// Momentum widths (1/mm) of the pure state with these position widths.
    pub fn to_momentum(&self) -> AxisWidths {
        AxisWidths {
            sigma_plus: 1.0 / (2.0 * self.sigma_plus_um * 1e-3),
            sigma_minus: 1.0 / (2.0 * self.sigma_minus_um * 1e-3),
        }
    }
}

/// Position widths of the pure Gaussian state, per axis `[x, y]`.
pub fn position_widths(model: &DoubleGaussianModel) -> [PositionWidths; 2] {
    let conv = |w: &AxisWidths| PositionWidths {
        sigma_plus_um: 1e3 / (2.0 * w.sigma_plus),
        sigma_minus_um: 1e3 / (2.0 * w.sigma_minus),
    };
    [conv(&model.x), conv(&model.y)]
}

/// Either the sinc phase-matched density or its double-Gaussian approximation.
#[derive(Debug, Clone)]
pub enum JointModel {
    Sinc { dispersion: DispersionModel, pump: PumpProfile },
    DoubleGaussian(DoubleGaussianModel),
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Unnormalized joint density |Λ(q1, q2)|² at the degenerate frequency.
pub fn evaluate_joint_density(q1: Vec2, q2: Vec2, model: &JointModel) -> Result<f64, OpticsError> {
    match model {
        JointModel::DoubleGaussian(m) => Ok(m.density(q1, q2)),
        JointModel::Sinc { dispersion, pump } => {
            let dkz = evaluate_delta_kz(q1, q2, dispersion.pump_center_frequency / 2.0, dispersion)?;
            let l_um = dispersion.crystal_length_mm * 1e3;
            let ep = pump.amplitude([q1[0] + q2[0], q1[1] + q2[1]]);
            let s = sinc(dkz * l_um / 2.0);
            Ok(ep * ep * s * s)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingMode {
    NearField,
    FarField,
}

/// Imaging from the crystal (or its Fourier plane) onto the sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpticalMapping {
    pub mode: MappingMode,
    /// Near-field magnification M.
    pub magnification: f64,
    /// Far-field Fourier lens focal length, mm.
    pub focal_length_mm: f64,
    /// Wavelength of the down-converted photons, nm.
    pub wavelength_nm: f64,
    /// Position of the optical axis relative to the sensor centre, pixels.
    pub center_offset_px: Vec2,
}

impl OpticalMapping {
    pub fn near_field(magnification: f64) -> Self {
        Self {
            mode: MappingMode::NearField,
            magnification,
            focal_length_mm: 150.0,
            wavelength_nm: 810.0,
            center_offset_px: [0.0, 0.0],
        }
    }

    pub fn far_field(focal_length_mm: f64, wavelength_nm: f64) -> Self {
        Self {
            mode: MappingMode::FarField,
            magnification: 9.0,
            focal_length_mm,
            wavelength_nm,
            center_offset_px: [0.0, 0.0],
        }
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        match self.mode {
            MappingMode::NearField if self.magnification == 0.0 || !self.magnification.is_finite() => {
                Err(OpticsError::InvalidModel("magnification must be finite and nonzero".into()))
            }
            MappingMode::FarField if !(self.focal_length_mm > 0.0 && self.wavelength_nm > 0.0) => {
                Err(OpticsError::InvalidModel("focal length and wavelength must be > 0".into()))
            }
            _ => Ok(()),
        }
    }

    /// Vacuum wavenumber 2π/λ in 1/mm.
    pub fn wavenumber_per_mm(&self) -> f64 {
        2.0 * PI / (self.wavelength_nm * 1e-6)
    }

    /// Physical size of one sensor pixel in object units: µm (near field)
    /// or 1/mm (far field).
    pub fn object_units_per_pixel(&self, pixel_pitch_um: f64) -> f64 {
        match self.mode {
            MappingMode::NearField => pixel_pitch_um / self.magnification.abs(),
            MappingMode::FarField => self.wavenumber_per_mm() * pixel_pitch_um * 1e-3 / self.focal_length_mm,
        }
    }
}

/// Object-plane coordinate recovered from a sensor position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ObjectCoordinate {
    /// Crystal-plane position, µm.
    Position(Vec2),
    /// Transverse momentum, 1/mm.
    Momentum(Vec2),
}

/// Sensor-plane position (µm, relative to the optical axis) to object
/// coordinates.
pub fn map_sensor_to_object(rho_um: Vec2, mapping: &OpticalMapping) -> ObjectCoordinate {
    match mapping.mode {
        MappingMode::NearField => {
            ObjectCoordinate::Position([rho_um[0] / mapping.magnification, rho_um[1] / mapping.magnification])
        }
        MappingMode::FarField => {
            let scale = mapping.wavenumber_per_mm() * 1e-3 / mapping.focal_length_mm;
            ObjectCoordinate::Momentum([rho_um[0] * scale, rho_um[1] * scale])
        }
    }
}

/// Inverse of [`map_sensor_to_object`] for the far field: momentum (1/mm)
/// to sensor position (µm).
pub fn momentum_to_sensor(q: Vec2, mapping: &OpticalMapping) -> Vec2 {
    let scale = mapping.focal_length_mm / (mapping.wavenumber_per_mm() * 1e-3);
    [q[0] * scale, q[1] * scale]
}

/// Conditional variance of a bivariate Gaussian with widths σ₊, σ₋ along the
/// rotated ± coordinates: 2σ₊²σ₋²/(σ₊²+σ₋²).
pub fn conditional_variance(sigma_plus: f64, sigma_minus: f64) -> f64 {
    let p2 = sigma_plus * sigma_plus;
    let m2 = sigma_minus * sigma_minus;
    2.0 * p2 * m2 / (p2 + m2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisPrediction {
    /// Δ_min(pos|pos), µm.
    pub delta_pos_um: f64,
    /// Δ_min(mom|mom), 1/mm.
    pub delta_mom: f64,
    pub v_min: f64,
}

/// Minimum inferred deviations and V_min implied by a double-Gaussian model.
pub fn predict_epr(model: &DoubleGaussianModel) -> [AxisPrediction; 2] {
    let pos = position_widths(model);
    let axis = |w: &AxisWidths, p: &PositionWidths| {
        let mom_var = conditional_variance(w.sigma_plus, w.sigma_minus);
        let pos_var = conditional_variance(p.sigma_plus_um, p.sigma_minus_um);
        AxisPrediction { delta_pos_um: pos_var.sqrt(), delta_mom: mom_var.sqrt(), v_min: pos_var * mom_var / 1e6 }
    };
    [axis(&model.x, &pos[0]), axis(&model.y, &pos[1])]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ktp_like() -> DispersionModel {
        // ω_cp for 405 nm.
        let omega_p = 2.0 * PI * SPEED_OF_LIGHT_UM_PER_S / 0.405;
        DispersionModel::constant_index(1.8, omega_p, 3.51043, 12.0).unwrap()
    }

    #[test]
    fn delta_kz_on_axis_is_grating_vector() {
        let d = ktp_like();
        let dk = evaluate_delta_kz([0.0, 0.0], [0.0, 0.0], d.pump_center_frequency / 2.0, &d).unwrap();
        assert_relative_eq!(dk, 2.0 * PI / 3.51043, max_relative = 1e-12);
        assert!((dk - 1.78986).abs() < 5e-6);
    }

    #[test]
    fn delta_kz_rejects_evanescent_momenta() {
        let d = ktp_like();
        let err = evaluate_delta_kz([1e5, 0.0], [0.0, 0.0], d.pump_center_frequency / 2.0, &d);
        assert!(matches!(err, Err(OpticsError::EvanescentInput(_))));
    }

    #[test]
    fn tabulated_index_interpolates() {
        let d = DispersionModel::tabulated(vec![(2.0, 1.6), (1.0, 1.5)], 3.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(d.refractive_index(1.5), 1.55, max_relative = 1e-12);
        assert_relative_eq!(d.refractive_index(0.0), 1.5);
        assert_relative_eq!(d.refractive_index(9.0), 1.6);
    }

    #[test]
    fn sinc_density_limits() {
        let d = ktp_like();
        let pump = PumpProfile::Gaussian { w0x_um: 250.0, w0y_um: 300.0 };
        let model = JointModel::Sinc { dispersion: d.clone(), pump: pump.clone() };
        // Find a crystal length putting Δk_z·L/2 exactly at π on axis.
        let dk = 2.0 * PI / d.poling_period_um;
        let l_mm = 2.0 * PI / dk * 1e-3;
        let at_zero = JointModel::Sinc {
            dispersion: DispersionModel::constant_index(1.8, d.pump_center_frequency, d.poling_period_um, l_mm)
                .unwrap(),
            pump: pump.clone(),
        };
        let v = evaluate_joint_density([0.0, 0.0], [0.0, 0.0], &at_zero).unwrap();
        assert!(v.abs() < 1e-20);
        // On axis with Δk_z ≠ 0 the value stays bounded by |E_p|².
        let v = evaluate_joint_density([1.0, 0.0], [-1.0, 0.0], &model).unwrap();
        assert!(v <= pump.amplitude([0.0, 0.0]).powi(2));
    }

    #[test]
    fn sinc_density_equals_pump_when_phase_matched() {
        // Tiny poling period cancels nothing, so build one where Δk_z = 0 exactly:
        // with constant index and q = 0, Δk_z = 2π/G, which never vanishes; use a
        // custom index making the pump term absorb the grating vector.
        let omega_p = 2.0 * PI * SPEED_OF_LIGHT_UM_PER_S / 0.405;
        let g = 3.51043;
        let n_signal = 1.8;
        let k_signal = n_signal * omega_p / 2.0 / SPEED_OF_LIGHT_UM_PER_S;
        let n_pump = (2.0 * k_signal + 2.0 * PI / g) * SPEED_OF_LIGHT_UM_PER_S / omega_p;
        let d = DispersionModel::new(move |w| if w > 0.75 * omega_p { n_pump } else { n_signal }, omega_p, g, 12.0)
            .unwrap();
        let pump = PumpProfile::Gaussian { w0x_um: 250.0, w0y_um: 300.0 };
        let q1 = [0.0, 0.0];
        let q2 = [0.0, 0.0];
        let dk = evaluate_delta_kz(q1, q2, omega_p / 2.0, &d).unwrap();
        assert!(dk.abs() < 1e-12);
        let v = evaluate_joint_density(q1, q2, &JointModel::Sinc { dispersion: d, pump: pump.clone() }).unwrap();
        assert_relative_eq!(v, pump.amplitude([0.0, 0.0]).powi(2), max_relative = 1e-12);
    }

    #[test]
    fn double_gaussian_peak_and_factorization() {
        let m = DoubleGaussianModel::reference_source();
        assert_eq!(m.density([0.0, 0.0], [0.0, 0.0]), 1.0);
        let (q1, q2) = ([3.0, -2.0], [1.5, 4.0]);
        assert_relative_eq!(
            m.density(q1, q2),
            m.density_x(q1[0], q2[0]) * m.density_y(q1[1], q2[1]),
            max_relative = 1e-15
        );
        assert!(m.density(q1, q2) < 1.0);
    }

    #[test]
    fn position_width_examples() {
        // σ_q+ = 0.5 /µm = 500 /mm gives σ_x+ = 1 µm.
        let m = DoubleGaussianModel::new(
            AxisWidths { sigma_plus: 500.0, sigma_minus: 10.0 },
            AxisWidths { sigma_plus: 7.0, sigma_minus: 7.0 },
        )
        .unwrap();
        let p = position_widths(&m);
        assert_relative_eq!(p[0].sigma_plus_um, 1.0, max_relative = 1e-12);
        assert_relative_eq!(p[1].sigma_plus_um, p[1].sigma_minus_um);
        assert_relative_eq!(p[1].sigma_plus_um, 1e3 / 14.0, max_relative = 1e-12);
    }

    #[test]
    fn reference_model_round_trips_targets() {
        let m = DoubleGaussianModel::reference_source();
        let pred = predict_epr(&m);
        assert_relative_eq!(pred[0].delta_pos_um, 37.3, max_relative = 1e-10);
        assert_relative_eq!(pred[0].delta_mom, 4.0, max_relative = 1e-10);
        assert_relative_eq!(pred[1].delta_pos_um, 37.3, max_relative = 1e-10);
        assert_relative_eq!(pred[1].delta_mom, 3.4, max_relative = 1e-10);
        assert!((pred[0].v_min - 2.2e-2).abs() < 0.05e-2);
        assert!((pred[1].v_min - 1.6e-2).abs() < 0.05e-2);
        assert!(m.x.sigma_plus < m.x.sigma_minus);
    }

    #[test]
    fn unattainable_targets_are_rejected() {
        assert!(matches!(AxisWidths::from_conditional_targets(200.0, 4.0), Err(OpticsError::UnattainableTarget(_))));
    }

    #[test]
    fn conditional_variance_of_isotropic_gaussian() {
        assert_relative_eq!(conditional_variance(3.0, 3.0), 9.0);
    }

    #[test]
    fn mapping_examples() {
        let ff = OpticalMapping::far_field(150.0, 810.0);
        match map_sensor_to_object([700.0, 0.0], &ff) {
            ObjectCoordinate::Momentum(q) => assert!((q[0] - 36.2).abs() < 0.05, "{q:?}"),
            other => panic!("{other:?}"),
        }
        let nf = OpticalMapping::near_field(9.0);
        match map_sensor_to_object([44.67, 0.0], &nf) {
            ObjectCoordinate::Position(x) => assert!((x[0] - 4.963).abs() < 1e-3),
            other => panic!("{other:?}"),
        }
        assert_eq!(map_sensor_to_object([0.0, 0.0], &nf), ObjectCoordinate::Position([0.0, 0.0]));
        assert_eq!(map_sensor_to_object([0.0, 0.0], &ff), ObjectCoordinate::Momentum([0.0, 0.0]));
        let back = momentum_to_sensor([36.2, -3.0], &ff);
        match map_sensor_to_object(back, &ff) {
            ObjectCoordinate::Momentum(q) => {
                assert_relative_eq!(q[0], 36.2, max_relative = 1e-12);
                assert_relative_eq!(q[1], -3.0, max_relative = 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_mapping() {
        assert!(OpticalMapping::near_field(0.0).validate().is_err());
        assert!(OpticalMapping::far_field(-1.0, 810.0).validate().is_err());
    }
}
