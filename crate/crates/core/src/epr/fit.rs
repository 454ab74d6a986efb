//! Damped Gauss–Newton (Levenberg–Marquardt) least squares and the Gaussian
//! models fitted by the EPR methods.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("degenerate fit input: {0}")]
    DegenerateInput(String),
    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize, fit: Box<GaussianFit> },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Stop once `‖δ‖ / ‖p‖` falls below this.
    pub relative_step: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iterations: 200, relative_step: 1e-10, initial_damping: 1e-3 }
    }
}

/// Result of a least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFit {
    pub params: Vec<f64>,
    /// Parameter covariance `(JᵀWJ)⁻¹ · χ²/(N − P)`, row-major.
    pub covariance: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `sqrt(Σ wᵢ rᵢ²)` at the returned parameters.
    pub residual_norm: f64,
    pub n_points: usize,
}

impl GaussianFit {
    pub fn std_error(&self, k: usize) -> f64 {
        let p = self.params.len();
        self.covariance[k * p + k].max(0.0).sqrt()
    }

    pub fn require_converged(self) -> Result<Self, FitError> {
        if self.converged {
            Ok(self)
        } else {
            Err(FitError::NotConverged { iterations: self.iterations, fit: Box::new(self) })
        }
    }
}

/// Minimise `Σ wᵢ (yᵢ − f(p, i))²`. `model(p, i, grad)` returns `f(p, i)`
/// and writes `∂f/∂p` into `grad`.
///
/// Each iteration solves `(JᵀWJ + λ·diag(JᵀWJ)) δ = JᵀW r`; a step is
/// accepted only if it does not increase χ², otherwise λ grows tenfold.
pub fn levenberg_marquardt<F>(
    model: F,
    ys: &[f64],
    weights: &[f64],
    p0: &[f64],
    options: LmOptions,
) -> Result<GaussianFit, FitError>
where
    F: Fn(&[f64], usize, &mut [f64]) -> f64,
{
    let n = ys.len();
    let m = p0.len();
    if weights.len() != n {
        return Err(FitError::DegenerateInput("weights and data differ in length".into()));
    }
    if n < m {
        return Err(FitError::DegenerateInput(format!("{n} points for {m} parameters")));
    }
    if ys.iter().chain(weights).chain(p0).any(|v| !v.is_finite()) || weights.iter().any(|&w| w < 0.0) {
        return Err(FitError::DegenerateInput("non-finite data or negative weight".into()));
    }

    let mut grad = vec![0.0; m];
    let chi2_of = |p: &[f64], grad: &mut [f64]| -> f64 {
        (0..n)
            .map(|i| {
                let r = ys[i] - model(p, i, grad);
                weights[i] * r * r
            })
            .sum()
    };
    let normal_equations = |p: &[f64], grad: &mut [f64]| -> (DMatrix<f64>, DVector<f64>, f64) {
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut g = DVector::<f64>::zeros(m);
        let mut chi2 = 0.0;
        for i in 0..n {
            let f = model(p, i, grad);
            let r = ys[i] - f;
            let w = weights[i];
            chi2 += w * r * r;
            for j in 0..m {
                g[j] += w * grad[j] * r;
                for k in 0..=j {
                    a[(j, k)] += w * grad[j] * grad[k];
                }
            }
        }
        for j in 0..m {
            for k in 0..j {
                a[(k, j)] = a[(j, k)];
            }
        }
        (a, g, chi2)
    };

    let mut p = p0.to_vec();
    let (mut a, mut g, mut chi2) = normal_equations(&p, &mut grad);
    if !chi2.is_finite() {
        return Err(FitError::DegenerateInput("model is not finite at the initial guess".into()));
    }
    let mut lambda = options.initial_damping;
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; m];
    while iterations < options.max_iterations {
        iterations += 1;
        let max_diag = (0..m).map(|j| a[(j, j)]).fold(0.0, f64::max);
        let mut damped = a.clone();
        for j in 0..m {
            damped[(j, j)] += lambda * a[(j, j)].max(1e-12 * max_diag).max(f64::MIN_POSITIVE);
        }
        let Some(delta) = damped.cholesky().map(|c| c.solve(&g)) else {
            lambda *= 10.0;
            continue;
        };
        let p_norm = p.iter().map(|v| v * v).sum::<f64>().sqrt();
        let step = delta.norm();
        for j in 0..m {
            trial[j] = p[j] + delta[j];
        }
        let trial_chi2 = chi2_of(&trial, &mut grad);
        if trial_chi2.is_finite() && trial_chi2 <= chi2 {
            p.copy_from_slice(&trial);
            (a, g, chi2) = normal_equations(&p, &mut grad);
            lambda = (lambda / 10.0).max(1e-15);
        } else {
            lambda *= 10.0;
        }
        if step <= options.relative_step * p_norm.max(f64::MIN_POSITIVE) || chi2 == 0.0 {
            converged = true;
            break;
        }
        if lambda > 1e20 {
            // No descent direction left at machine precision.
            converged = true;
            break;
        }
    }

    let dof = (n - m).max(1) as f64;
    let covariance = match a.clone().try_inverse() {
        Some(inv) => (inv * (chi2 / dof)).as_slice().to_vec(),
        None => vec![f64::NAN; m * m],
    };
    Ok(GaussianFit { params: p, covariance, converged, iterations, residual_norm: chi2.sqrt(), n_points: n })
}

/// `A·exp(−(x−μ)²/2σ²) + c` with parameters `[A, μ, σ, c]`.
pub fn gaussian_1d(x: f64, p: &[f64], grad: &mut [f64]) -> f64 {
    let (amp, mu, sigma) = (p[0], p[1], p[2]);
    let z = (x - mu) / sigma;
    let e = (-0.5 * z * z).exp();
    grad[0] = e;
    grad[1] = amp * e * z / sigma;
    grad[2] = amp * e * z * z / sigma;
    grad[3] = 1.0;
    amp * e + p[3]
}

/// `A·exp(−u₊²/2σ₊² − u₋²/2σ₋²) + c` with `u± = ((a−cₐ) ± (b−c_b))/√2` and
/// parameters `[A, cₐ, c_b, σ₊, σ₋, c]`.
pub fn gaussian_2d(a: f64, b: f64, p: &[f64], grad: &mut [f64]) -> f64 {
    let (amp, ca, cb, sp, sm) = (p[0], p[1], p[2], p[3], p[4]);
    let (da, db) = (a - ca, b - cb);
    let up = (da + db) * FRAC_1_SQRT_2;
    let um = (da - db) * FRAC_1_SQRT_2;
    let (zp, zm) = (up / sp, um / sm);
    let e = (-0.5 * (zp * zp + zm * zm)).exp();
    let ae = amp * e;
    // ∂/∂cₐ of −u²/2σ²: u₊ and u₋ both have ∂u/∂cₐ = −1/√2.
    let dp = zp / sp;
    let dm = zm / sm;
    grad[0] = e;
    grad[1] = ae * (dp + dm) * FRAC_1_SQRT_2;
    grad[2] = ae * (dp - dm) * FRAC_1_SQRT_2;
    grad[3] = ae * zp * zp / sp;
    grad[4] = ae * zm * zm / sm;
    grad[5] = 1.0;
    ae + p[5]
}

fn finite_and_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

/// Fit [`gaussian_1d`] with moment-based initialisation. Non-convergence is
/// reported through [`GaussianFit::converged`].
pub fn fit_gaussian_1d(xs: &[f64], ys: &[f64], weights: &[f64]) -> Result<GaussianFit, FitError> {
    if xs.len() != ys.len() || ys.len() != weights.len() {
        return Err(FitError::DegenerateInput("xs, ys and weights differ in length".into()));
    }
    if xs.len() < 5 {
        return Err(FitError::DegenerateInput(format!("{} points, at least 5 required", xs.len())));
    }
    let p0 = initial_1d(xs, ys)?;
    let mut fit = levenberg_marquardt(|p, i, g| gaussian_1d(xs[i], p, g), ys, weights, &p0, LmOptions::default())?;
    fit.params[2] = fit.params[2].abs();
    Ok(fit)
}

fn initial_1d(xs: &[f64], ys: &[f64]) -> Result<Vec<f64>, FitError> {
    let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let offset = lo;
    let (mut w, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let v = (y - offset).max(0.0);
        w += v;
        m1 += v * x;
        m2 += v * x * x;
    }
    if !(w > 0.0) || !(hi > lo) {
        return Err(FitError::DegenerateInput("flat data".into()));
    }
    let mu = m1 / w;
    let spacing = min_spacing(xs);
    let sigma = (m2 / w - mu * mu).max(0.0).sqrt().max(spacing);
    if !finite_and_positive(sigma) {
        return Err(FitError::DegenerateInput("zero spread".into()));
    }
    Ok(vec![hi - offset, mu, sigma, offset])
}

fn min_spacing(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min).clamp(1e-6, 1.0)
}

/// Fit [`gaussian_2d`] to scattered cells `(a, b, y)`.
pub fn fit_gaussian_2d(cells: &[(f64, f64)], ys: &[f64], weights: &[f64]) -> Result<GaussianFit, FitError> {
    if cells.len() != ys.len() || ys.len() != weights.len() {
        return Err(FitError::DegenerateInput("cells, ys and weights differ in length".into()));
    }
    if cells.len() < 12 {
        return Err(FitError::DegenerateInput(format!("{} cells, at least 12 required", cells.len())));
    }
    let p0 = initial_2d(cells, ys)?;
    let mut fit = levenberg_marquardt(
        |p, i, g| gaussian_2d(cells[i].0, cells[i].1, p, g),
        ys,
        weights,
        &p0,
        LmOptions::default(),
    )?;
    fit.params[3] = fit.params[3].abs();
    fit.params[4] = fit.params[4].abs();
    Ok(fit)
}

fn initial_2d(cells: &[(f64, f64)], ys: &[f64]) -> Result<Vec<f64>, FitError> {
    let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (mut w, mut ma, mut mb) = (0.0, 0.0, 0.0);
    for (&(a, b), &y) in cells.iter().zip(ys) {
        let v = y.max(0.0);
        w += v;
        ma += v * a;
        mb += v * b;
    }
    if !(w > 0.0) {
        return Err(FitError::DegenerateInput("no positive cells".into()));
    }
    let (ca, cb) = (ma / w, mb / w);
    let (mut vp, mut vm) = (0.0, 0.0);
    for (&(a, b), &y) in cells.iter().zip(ys) {
        let v = y.max(0.0);
        let up = ((a - ca) + (b - cb)) * FRAC_1_SQRT_2;
        let um = ((a - ca) - (b - cb)) * FRAC_1_SQRT_2;
        vp += v * up * up;
        vm += v * um * um;
    }
    let sp = (vp / w).sqrt().max(0.5);
    let sm = (vm / w).sqrt().max(0.5);
    Ok(vec![hi, ca, cb, sp, sm, 0.0])
}
