use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::table::v_min;
use crate::optics::AxisPrediction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Numerical,
    Gauss1d,
    Gauss2d,
    Peaks,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Numerical, Method::Gauss1d, Method::Gauss2d, Method::Peaks];

    pub fn label(self) -> &'static str {
        match self {
            Method::Numerical => "numerical",
            Method::Gauss1d => "gauss1d",
            Method::Gauss2d => "gauss2d",
            Method::Peaks => "peaks",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.label() == s)
    }
}

/// One method's result on one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    /// Δ_min(pos|pos), µm.
    pub delta_pos_um: f64,
    /// Δ_min(mom|mom), 1/mm.
    pub delta_mom: f64,
    pub v_min: f64,
    pub violated: bool,
}

impl MethodResult {
    pub fn from_variances(delta2_pos_um2: f64, delta2_mom: f64) -> Self {
        let (v, violated) = v_min(delta2_pos_um2, delta2_mom);
        Self { delta_pos_um: delta2_pos_um2.sqrt(), delta_mom: delta2_mom.sqrt(), v_min: v, violated }
    }

    /// `V` recomputed from the stored deviations.
    pub fn recomputed_v(&self) -> f64 {
        (self.delta_pos_um * 1e-3 * self.delta_mom).powi(2)
    }
}

/// Variance pairs `(Δ²_pos µm², Δ²_mom 1/mm²)` available for one axis.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AxisEstimates {
    pub methods: BTreeMap<Method, (f64, f64)>,
}

impl AxisEstimates {
    pub fn insert(&mut self, method: Method, delta2_pos_um2: f64, delta2_mom: f64) {
        self.methods.insert(method, (delta2_pos_um2, delta2_mom));
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisReport {
    pub axis: String,
    /// `None` marks a method that was not run or failed.
    pub methods: BTreeMap<Method, Option<MethodResult>>,
}

/// Per-axis, per-method EPR results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EprReport {
    pub axes: Vec<AxisReport>,
    /// Values implied by the source model, when known.
    pub expected: Option<Vec<AxisPrediction>>,
    /// Corrections applied to each input, by run name.
    pub provenance: BTreeMap<String, Vec<String>>,
    /// Column drops, floored cells and similar counts.
    pub diagnostics: BTreeMap<String, f64>,
}

pub fn compile_report(
    x: AxisEstimates,
    y: AxisEstimates,
    expected: Option<[AxisPrediction; 2]>,
    provenance: BTreeMap<String, Vec<String>>,
    diagnostics: BTreeMap<String, f64>,
) -> EprReport {
    let axis = |name: &str, e: AxisEstimates| AxisReport {
        axis: name.to_string(),
        methods: Method::ALL
            .into_iter()
            .map(|m| (m, e.methods.get(&m).map(|&(p, q)| MethodResult::from_variances(p, q))))
            .collect(),
    };
    EprReport {
        axes: vec![axis("x", x), axis("y", y)],
        expected: expected.map(|e| e.to_vec()),
        provenance,
        diagnostics,
    }
}

impl EprReport {
    pub fn get(&self, axis: usize, method: Method) -> Option<&MethodResult> {
        self.axes.get(axis)?.methods.get(&method)?.as_ref()
    }

    /// True when every present method violates the bound on every axis.
    pub fn all_violated(&self) -> bool {
        self.axes.iter().all(|a| a.methods.values().flatten().all(|m| m.violated))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is always serialisable")
    }

    /// Aligned text table, one row per method, both axes side by side.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}",
            "method", "Δx [µm]", "Δqx [/mm]", "V_x", "Δy [µm]", "Δqy [/mm]", "V_y"
        );
        let cell = |r: Option<&MethodResult>| match r {
            Some(r) => format!("{:>10.2} {:>10.2} {:>10.3e}", r.delta_pos_um, r.delta_mom, r.v_min),
            None => format!("{:>10} {:>10} {:>10}", "-", "-", "-"),
        };
        if let Some(e) = &self.expected {
            let row = |p: &AxisPrediction| format!("{:>10.2} {:>10.2} {:>10.3e}", p.delta_pos_um, p.delta_mom, p.v_min);
            let _ = writeln!(s, "{:<12} {} {}", "expected", row(&e[0]), row(&e[1]));
        }
        for m in Method::ALL {
            let _ = writeln!(s, "{:<12} {} {}", m.label(), cell(self.get(0, m)), cell(self.get(1, m)));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn absent_methods_marked() {
        let mut x = AxisEstimates::default();
        x.insert(Method::Numerical, 37.3f64.powi(2), 16.0);
        let r = compile_report(x, AxisEstimates::default(), None, BTreeMap::new(), BTreeMap::new());
        assert!(r.get(0, Method::Numerical).is_some());
        assert!(r.get(0, Method::Peaks).is_none());
        assert!(r.get(1, Method::Numerical).is_none());
        assert!(r.render_table().contains("numerical"));
        let back: EprReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn stored_v_is_consistent() {
        let m = MethodResult::from_variances(1391.29, 16.0);
        assert!((m.v_min - m.recomputed_v()).abs() < 1e-12);
    }
}
