use serde::{Deserialize, Serialize};

use super::EprError;
use crate::correlator::AxisProjection;

/// Physical meaning of a joint table's axes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisKind {
    /// Object-plane position, µm per pixel.
    Position,
    /// Transverse momentum, 1/mm per pixel.
    Momentum,
}

/// A square joint correlation table over one axis, `values[a * n + b]`
/// with `a` the photon-1 pixel and `b` the photon-2 pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointTable {
    pub n: usize,
    pub values: Vec<f64>,
    pub masked: Vec<bool>,
    pub kind: AxisKind,
    /// Physical units per pixel.
    pub scale: f64,
    /// Raw counts per table unit, used for Poisson fit weights.
    pub count_scale: f64,
}

impl JointTable {
    pub fn new(
        n: usize,
        values: Vec<f64>,
        masked: Vec<bool>,
        kind: AxisKind,
        scale: f64,
        count_scale: f64,
    ) -> Result<Self, EprError> {
        if values.len() != n * n || masked.len() != n * n {
            return Err(EprError::InvalidTable("shape mismatch".into()));
        }
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(EprError::InvalidTable("scale must be > 0".into()));
        }
        if !(count_scale > 0.0) {
            return Err(EprError::InvalidTable("count scale must be > 0".into()));
        }
        if !values.iter().zip(&masked).any(|(&v, &m)| !m && v > 0.0) {
            return Err(EprError::InvalidTable("no unmasked positive cell".into()));
        }
        Ok(Self { n, values, masked, kind, scale, count_scale })
    }

    /// Table from an axis projection; cells with `|a − b| ≤ mask_radius`
    /// lose part of their content to the neighbour mask and are flagged.
    pub fn from_projection(
        proj: &AxisProjection,
        mask_radius: Option<u16>,
        kind: AxisKind,
        scale: f64,
        count_scale: f64,
    ) -> Result<Self, EprError> {
        let n = proj.n;
        let masked = (0..n * n)
            .map(|k| match mask_radius {
                Some(r) => (k / n).abs_diff(k % n) <= r as usize,
                None => false,
            })
            .collect();
        Self::new(n, proj.values.clone(), masked, kind, scale, count_scale)
    }

    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }

    pub fn is_masked(&self, a: usize, b: usize) -> bool {
        self.masked[a * self.n + b]
    }

    pub fn transpose(&self) -> Self {
        let n = self.n;
        let mut t = self.clone();
        for a in 0..n {
            for b in 0..n {
                t.values[b * n + a] = self.values[a * n + b];
                t.masked[b * n + a] = self.masked[a * n + b];
            }
        }
        t
    }
}

/// Conditional distributions `P(a|b)` per column and the marginal `P(b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditionals {
    pub n: usize,
    /// `columns[b]` is `P(·|b)` for retained columns.
    pub columns: Vec<Option<Vec<f64>>>,
    /// `P(b)`, zero on dropped columns, sums to 1.
    pub marginal: Vec<f64>,
    /// Columns left out of the weighting.
    pub dropped: Vec<usize>,
    /// Unmasked cells with negative values that were floored at zero.
    pub floored: usize,
}

/// Default fraction of the largest column total a column needs to be kept.
pub const DEFAULT_COLUMN_THRESHOLD: f64 = 0.01;

pub fn conditionals_and_marginal(t: &JointTable, threshold: f64) -> Result<Conditionals, EprError> {
    let n = t.n;
    let mut floored = 0;
    let mut totals = vec![0.0; n];
    for a in 0..n {
        for b in 0..n {
            if t.is_masked(a, b) {
                continue;
            }
            let v = t.at(a, b);
            if v < 0.0 {
                floored += 1;
            } else {
                totals[b] += v;
            }
        }
    }
    let max_total = totals.iter().copied().fold(0.0, f64::max);
    if !(max_total > 0.0) {
        return Err(EprError::AllColumnsEmpty);
    }
    let cut = threshold * max_total;
    let kept_total: f64 = totals.iter().filter(|&&s| s > 0.0 && s >= cut).sum();
    let mut columns = vec![None; n];
    let mut marginal = vec![0.0; n];
    let mut dropped = Vec::new();
    for b in 0..n {
        if !(totals[b] > 0.0 && totals[b] >= cut) {
            dropped.push(b);
            continue;
        }
        marginal[b] = totals[b] / kept_total;
        let col = (0..n).map(|a| if t.is_masked(a, b) { 0.0 } else { t.at(a, b).max(0.0) / totals[b] }).collect();
        columns[b] = Some(col);
    }
    Ok(Conditionals { n, columns, marginal, dropped, floored })
}

/// `Δ²_min(a|b) = Σ_b P(b) · Var(a|b)`, in `scale²` units.
pub fn min_inferred_variance(c: &Conditionals, scale: f64) -> f64 {
    let mut total = 0.0;
    for (b, col) in c.columns.iter().enumerate() {
        let Some(col) = col else { continue };
        let mean: f64 = col.iter().enumerate().map(|(a, p)| a as f64 * p).sum();
        let var: f64 = col.iter().enumerate().map(|(a, p)| p * (a as f64 - mean).powi(2)).sum();
        total += c.marginal[b] * var;
    }
    total * scale * scale
}

/// Reid product `V = Δ²_pos · Δ²_mom` with position in µm² and momentum in
/// 1/mm², and whether it violates `V < 1/4`.
pub fn v_min(delta2_pos_um2: f64, delta2_mom: f64) -> (f64, bool) {
    let v = delta2_pos_um2 * delta2_mom / 1e6;
    (v, v < 0.25)
}

/// Conditional variance from widths fitted along the rotated ± axes.
pub fn schneeloch_conditional(sigma_plus: f64, sigma_minus: f64) -> f64 {
    crate::optics::conditional_variance(sigma_plus, sigma_minus)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(n: usize, values: Vec<f64>) -> JointTable {
        JointTable::new(n, values, vec![false; n * n], AxisKind::Position, 1.0, 1.0).unwrap()
    }

    #[test]
    fn point_mass() {
        let mut v = vec![0.0; 9];
        v[4] = 3.0;
        let c = conditionals_and_marginal(&table(3, v), DEFAULT_COLUMN_THRESHOLD).unwrap();
        assert_eq!(c.columns[1].as_ref().unwrap(), &vec![0.0, 1.0, 0.0]);
        assert_eq!(c.marginal, vec![0.0, 1.0, 0.0]);
        assert_eq!(c.dropped, vec![0, 2]);
        assert_eq!(min_inferred_variance(&c, 1.0), 0.0);
    }

    #[test]
    fn uniform_table() {
        let c = conditionals_and_marginal(&table(32, vec![2.0; 1024]), DEFAULT_COLUMN_THRESHOLD).unwrap();
        for col in c.columns.iter().flatten() {
            assert!(col.iter().all(|&p| (p - 1.0 / 32.0).abs() < 1e-15));
        }
        assert!(c.marginal.iter().all(|&p| (p - 1.0 / 32.0).abs() < 1e-15));
    }

    #[test]
    fn two_point_variance() {
        let n = 8;
        let mut v = vec![0.0; n * n];
        v[4 * n + 2] = 0.5;
        v[6 * n + 2] = 0.5;
        let c = conditionals_and_marginal(&table(n, v), DEFAULT_COLUMN_THRESHOLD).unwrap();
        assert!((min_inferred_variance(&c, 1.0) - 1.0).abs() < 1e-15);
        assert!((min_inferred_variance(&c, 3.0) - 9.0).abs() < 1e-12);
    }

    #[test]
    fn hand_table() {
        // Columns b = 0, 1, 2; rows a = 0, 1, 2.
        #[rustfmt::skip]
        let v = vec![
            1.0, 0.0, 2.0,
            1.0, 4.0, 0.0,
            2.0, 0.0, 2.0,
        ];
        let c = conditionals_and_marginal(&table(3, v), 0.0).unwrap();
        // Column totals 4, 4, 4. Var col0: mean 1.25, E[a²]=(1+8)/4 → 2.25−1.5625.
        let var0 = 2.25 - 1.5625;
        let var1 = 0.0;
        let var2 = 1.0;
        let expected = (var0 + var1 + var2) / 3.0;
        assert!((min_inferred_variance(&c, 1.0) - expected).abs() < 1e-12);
    }

    #[test]
    fn negatives_floored_and_masked_ignored() {
        let n = 3;
        let v = vec![1.0, -1.0, 1.0, 5.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let mut masked = vec![false; 9];
        masked[3] = true;
        let t = JointTable::new(n, v, masked, AxisKind::Momentum, 2.0, 1.0).unwrap();
        let c = conditionals_and_marginal(&t, 0.0).unwrap();
        assert_eq!(c.floored, 1);
        assert_eq!(c.columns[0].as_ref().unwrap(), &vec![0.5, 0.0, 0.5]);
        assert_eq!(c.columns[1].as_ref().unwrap(), &vec![0.0, 0.5, 0.5]);
    }

    #[test]
    fn all_empty_rejected() {
        assert!(JointTable::new(2, vec![0.0; 4], vec![false; 4], AxisKind::Position, 1.0, 1.0).is_err());
        let t = JointTable {
            n: 2,
            values: vec![-1.0; 4],
            masked: vec![false; 4],
            kind: AxisKind::Position,
            scale: 1.0,
            count_scale: 1.0,
        };
        assert!(matches!(conditionals_and_marginal(&t, 0.01), Err(EprError::AllColumnsEmpty)));
    }

    #[test]
    fn v_min_examples() {
        let (v, violated) = v_min(37.3f64.powi(2), 4.0f64.powi(2));
        assert!((v - 2.226e-2).abs() < 1e-4 && violated);
        let (v, violated) = v_min(37.3f64.powi(2), 3.4f64.powi(2));
        assert!((v - 1.608e-2).abs() < 1e-4 && violated);
        let (v, violated) = v_min(125.0f64.powi(2), 4.0f64.powi(2));
        assert_eq!(v, 0.25);
        assert!(!violated);
    }

    #[test]
    fn schneeloch_examples() {
        assert!((schneeloch_conditional(3.0, 4.0) - 11.52).abs() < 1e-12);
        assert!((schneeloch_conditional(2.0, 2.0) - 4.0).abs() < 1e-12);
        let s = 1.5;
        let r = schneeloch_conditional(1e6 * s, s) / (2.0 * s * s);
        assert!((r - 1.0).abs() < 1e-5);
    }
}
