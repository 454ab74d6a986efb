use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use serde::{Deserialize, Serialize};

use super::fit::{fit_gaussian_1d, fit_gaussian_2d, gaussian_1d, gaussian_2d, GaussianFit};
use super::table::{conditionals_and_marginal, min_inferred_variance, schneeloch_conditional, JointTable};
use super::EprError;
use crate::correlator::OffsetGrid;

/// Conditional variance estimate of one table, physical units squared.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub delta2: f64,
    /// Columns excluded from the weighting (threshold or failed fit).
    pub dropped_columns: usize,
    pub floored_cells: usize,
}

/// Direct evaluation of `Σ_b P(b) Var(a|b)` on the floored table.
pub fn numerical(t: &JointTable, threshold: f64) -> Result<VarianceEstimate, EprError> {
    let c = conditionals_and_marginal(t, threshold)?;
    Ok(VarianceEstimate {
        delta2: min_inferred_variance(&c, t.scale),
        dropped_columns: c.dropped.len(),
        floored_cells: c.floored,
    })
}

/// Fit a Gaussian to every retained column and weight the fitted
/// variances by the empirical marginal.
pub fn gauss1d(t: &JointTable, threshold: f64) -> Result<VarianceEstimate, EprError> {
    let c = conditionals_and_marginal(t, threshold)?;
    let n = t.n;
    let (mut acc, mut weight) = (0.0, 0.0);
    let mut dropped = c.dropped.len();
    for b in 0..n {
        if c.columns[b].is_none() {
            continue;
        }
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for a in 0..n {
            if !t.is_masked(a, b) {
                xs.push(a as f64);
                ys.push(t.at(a, b) * t.count_scale);
            }
        }
        let fit = fit_gaussian_1d(&xs, &ys, &vec![1.0; ys.len()]).and_then(|first| {
            let ws = reweight(
                &ys,
                &first,
                |i, p, g| gaussian_1d(xs[i], p, g),
                |i, p| (xs[i] - p[1]).abs() > 3.0 * p[2].abs(),
            );
            fit_gaussian_1d(&xs, &ys, &ws)
        });
        match fit {
            Ok(fit) if usable(&fit, n) => {
                acc += c.marginal[b] * fit.params[2].powi(2);
                weight += c.marginal[b];
            }
            _ => dropped += 1,
        }
    }
    if !(weight > 0.0) {
        return Err(EprError::NoUsableFit("no column fit succeeded".into()));
    }
    Ok(VarianceEstimate {
        delta2: acc / weight * t.scale * t.scale,
        dropped_columns: dropped,
        floored_cells: c.floored,
    })
}

/// A column fit counts only if it converged to a positive peak centred
/// on the table with a width well inside it.
fn usable(fit: &GaussianFit, n: usize) -> bool {
    let (a, mu, s) = (fit.params[0], fit.params[1], fit.params[2]);
    let se = fit.std_error(2);
    fit.converged
        && a > 0.0
        && (0.0..=(n - 1) as f64).contains(&mu)
        && s > 0.0
        && s <= n as f64 / 4.0
        && se.is_finite()
        && se < 0.5 * s
}

/// Weights `1/(max(m, 0) + b²)` from a first fit `m`, where `b²` is the mean
/// squared residual of cells away from the peak. The tails of an
/// accidental-subtracted table are zero-mean noise, so the weight has to
/// carry that floor rather than the observed count.
fn reweight(
    ys: &[f64],
    first: &GaussianFit,
    model: impl Fn(usize, &[f64], &mut [f64]) -> f64,
    in_tail: impl Fn(usize, &[f64]) -> bool,
) -> Vec<f64> {
    let p = &first.params;
    let mut grad = vec![0.0; p.len()];
    let m: Vec<f64> = (0..ys.len()).map(|i| model(i, p, &mut grad)).collect();
    let (mut ss, mut k) = (0.0, 0usize);
    for i in (0..ys.len()).filter(|&i| in_tail(i, p)) {
        ss += (ys[i] - m[i]).powi(2);
        k += 1;
    }
    let floor = if k > 0 { (ss / k as f64).max(1.0) } else { 1.0 };
    m.iter().map(|&m| 1.0 / (m.max(0.0) + floor)).collect()
}

/// Result of a 2D fit along the rotated axes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gauss2dEstimate {
    pub delta2: f64,
    /// Fitted widths along `u±`, pixels.
    pub sigma_plus_px: f64,
    pub sigma_minus_px: f64,
    pub fit: GaussianFit,
}

/// Fit a rotated 2D Gaussian to all unmasked cells.
pub fn gauss2d(t: &JointTable) -> Result<Gauss2dEstimate, EprError> {
    let n = t.n;
    let mut cells = Vec::with_capacity(n * n);
    let mut ys = Vec::with_capacity(n * n);
    for a in 0..n {
        for b in 0..n {
            if !t.is_masked(a, b) {
                cells.push((a as f64, b as f64));
                ys.push(t.at(a, b) * t.count_scale);
            }
        }
    }
    let first = fit_gaussian_2d(&cells, &ys, &vec![1.0; ys.len()])?;
    let ws = reweight(
        &ys,
        &first,
        |i, p, g| gaussian_2d(cells[i].0, cells[i].1, p, g),
        |i, p| {
            let (u, v) = rotated(cells[i].0 - p[1], cells[i].1 - p[2]);
            (u / p[3]).powi(2) + (v / p[4]).powi(2) > 9.0
        },
    );
    let fit = fit_gaussian_2d(&cells, &ys, &ws)?.require_converged()?;
    let (sp, sm) = (fit.params[3], fit.params[4]);
    if !(sp > 0.0 && sm > 0.0) {
        return Err(EprError::NoUsableFit(format!("fitted widths ({sp}, {sm})")));
    }
    Ok(Gauss2dEstimate {
        delta2: schneeloch_conditional(sp, sm) * t.scale * t.scale,
        sigma_plus_px: sp,
        sigma_minus_px: sm,
        fit,
    })
}

fn rotated(da: f64, db: f64) -> (f64, f64) {
    ((da + db) * FRAC_1_SQRT_2, (da - db) * FRAC_1_SQRT_2)
}

/// Which rotated coordinate carries the peak.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PeakCoordinate {
    /// Correlation peak in `ρ₋` (near field).
    Difference,
    /// Anti-correlation peak in `ρ₊` (far field).
    Sum,
}

/// A 1D peak profile in rotated pixel units (`(p1 ± p2)/√2`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakProfile {
    pub coordinate: PeakCoordinate,
    /// Rotated coordinate of each bin, pixels.
    pub rho: Vec<f64>,
    /// Mean correlation per contributing pixel pair.
    pub value: Vec<f64>,
    pub pairs: Vec<u64>,
    /// Whether the bin is excluded from the fit.
    pub excluded: Vec<bool>,
}

/// Collapse a sum or difference grid onto one axis and normalise by the
/// number of pixel pairs feeding each bin. Difference bins inside the
/// neighbour mask are excluded.
pub fn peak_profile(
    grid: &OffsetGrid,
    axis: usize,
    coordinate: PeakCoordinate,
    mask_radius: Option<u16>,
) -> PeakProfile {
    let marginal = grid.marginal(axis);
    let mut p = PeakProfile { coordinate, rho: vec![], value: vec![], pairs: vec![], excluded: vec![] };
    for (u, v, pairs) in marginal {
        p.rho.push(u as f64 * FRAC_1_SQRT_2);
        p.value.push(if pairs > 0 { v / pairs as f64 } else { 0.0 });
        p.pairs.push(pairs);
        let masked =
            coordinate == PeakCoordinate::Difference && mask_radius.is_some_and(|r| u.unsigned_abs() <= r as u32);
        p.excluded.push(pairs == 0 || masked);
    }
    p
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakEstimate {
    /// `√2 · σ` in physical units.
    pub delta: f64,
    pub sigma_px: f64,
    pub fit: GaussianFit,
}

/// Fit the profile and return `Δ ≈ √2·σ` in physical units.
/// `count_scale` converts profile sums back to raw counts for weighting.
pub fn peak_method(profile: &PeakProfile, scale: f64, count_scale: f64) -> Result<PeakEstimate, EprError> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for i in 0..profile.rho.len() {
        if profile.excluded[i] {
            continue;
        }
        let pairs = profile.pairs[i] as f64;
        let counts = profile.value[i] * pairs * count_scale;
        xs.push(profile.rho[i]);
        ys.push(profile.value[i]);
        // Var(mean) = counts / pairs² in table units.
        ws.push(pairs * pairs * count_scale / counts.max(1.0));
    }
    let fit = fit_gaussian_1d(&xs, &ys, &ws)?.require_converged()?;
    let sigma = fit.params[2];
    if !(sigma > 0.0) || fit.params[0] <= 0.0 {
        return Err(EprError::NoUsableFit(format!("peak fit σ = {sigma}")));
    }
    Ok(PeakEstimate { delta: SQRT_2 * sigma * scale, sigma_px: sigma, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::epr::fit::gaussian_2d;
    use crate::epr::AxisKind;

    fn synthetic(sp: f64, sm: f64, mask: Option<usize>) -> JointTable {
        let n = 32;
        let p = [1000.0, 15.5, 15.5, sp, sm, 0.0];
        let mut g = [0.0; 6];
        let mut values = vec![0.0; n * n];
        let mut masked = vec![false; n * n];
        for a in 0..n {
            for b in 0..n {
                values[a * n + b] = gaussian_2d(a as f64, b as f64, &p, &mut g);
                masked[a * n + b] = mask.is_some_and(|r| a.abs_diff(b) <= r);
            }
        }
        JointTable::new(n, values, masked, AxisKind::Position, 1.0, 1.0).unwrap()
    }

    #[test]
    fn gauss2d_noiseless() {
        let est = gauss2d(&synthetic(2.0, 6.0, None)).unwrap();
        assert!((est.sigma_plus_px - 2.0).abs() < 1e-6);
        assert!((est.sigma_minus_px - 6.0).abs() < 1e-6);
        assert!((est.delta2 - schneeloch_conditional(2.0, 6.0)).abs() < 1e-6);
    }

    #[test]
    fn gauss2d_transpose_invariant() {
        let t = synthetic(3.0, 3.0, None);
        let a = gauss2d(&t).unwrap();
        let b = gauss2d(&t.transpose()).unwrap();
        assert!((a.fit.residual_norm - b.fit.residual_norm).abs() < 1e-9);
        assert!((a.delta2 - 9.0).abs() < 1e-6);
    }

    #[test]
    fn gauss2d_with_masked_band() {
        let est = gauss2d(&synthetic(8.0, 3.0, Some(1))).unwrap();
        assert!((est.sigma_minus_px - 3.0).abs() < 1e-6);
    }

    #[test]
    fn gauss1d_on_separable_table() {
        // Exact Gaussian columns: conditional σ² equals the Schneeloch value.
        let t = synthetic(20.0, 2.0, None);
        let est = gauss1d(&t, 0.01).unwrap();
        let expected = schneeloch_conditional(20.0, 2.0);
        assert!((est.delta2 - expected).abs() / expected < 0.02, "{} vs {expected}", est.delta2);
    }

    #[test]
    fn peak_from_fitted_width() {
        // σ₋ = 24.25 µm gives Δ = √2·24.25 ≈ 34.3 µm.
        let rho: Vec<f64> = (-15..=15).map(|i| i as f64).collect();
        let value: Vec<f64> = rho.iter().map(|&r| 100.0 * (-0.5 * (r / 24.25).powi(2) * 25.0).exp()).collect();
        let n = rho.len();
        let profile = PeakProfile {
            coordinate: PeakCoordinate::Difference,
            rho,
            value,
            pairs: vec![100; n],
            excluded: vec![false; n],
        };
        // One profile unit is 5 µm here, so σ = 4.85 units.
        let est = peak_method(&profile, 5.0, 1.0).unwrap();
        assert!((est.delta - 34.295).abs() < 1e-3, "{}", est.delta);
    }
}
