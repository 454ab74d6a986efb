//! CSV plot data.

use std::fmt::Write as _;

use crate::correlator::{AxisProjection, CorrectedG2, CorrelationAccumulator, CrosstalkMap, SumDiffProjection};
use crate::epr::PeakProfile;

/// `dt,counts_per_mframe` over `−(bins−1)..=bins−1`.
pub fn dt_hist_csv(acc: &CorrelationAccumulator) -> String {
    let scale = if acc.n_frames() > 0 { 1e6 / acc.n_frames() as f64 } else { 0.0 };
    let offset = acc.bins_per_frame() as i64 - 1;
    let mut s = String::from("dt,counts_per_mframe\n");
    for (i, &c) in acc.dt_hist().iter().enumerate() {
        let _ = writeln!(s, "{},{}", i as i64 - offset, c as f64 * scale);
    }
    s
}

/// Full tensor as a square matrix in linear pixel index order, no header.
pub fn matrix_csv(g2: &CorrectedG2) -> String {
    let n = g2.geometry().n_pixels();
    let mut s = String::with_capacity(n * n * 4);
    for row in g2.values().chunks_exact(n) {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

/// `axis,p1,p2,value` with 1-based pixel coordinates.
pub fn projections_csv(x: &AxisProjection, y: &AxisProjection) -> String {
    let mut s = String::from("axis,p1,p2,value\n");
    for (name, p) in [("x", x), ("y", y)] {
        for a in 0..p.n {
            for b in 0..p.n {
                let _ = writeln!(s, "{name},{},{},{}", a + 1, b + 1, p.at(a, b));
            }
        }
    }
    s
}

/// `grid,u,v,value,pairs` for the sum and difference grids in pixel units.
pub fn sum_diff_csv(p: &SumDiffProjection) -> String {
    let mut s = String::from("grid,u,v,value,pairs\n");
    for (name, g) in [("sum", &p.sum), ("diff", &p.diff)] {
        for j in 0..g.side_y {
            for i in 0..g.side_x {
                let k = j * g.side_x + i;
                let _ = writeln!(
                    s,
                    "{name},{},{},{},{}",
                    g.origin.0 + i as i32,
                    g.origin.1 + j as i32,
                    g.values[k],
                    g.pairs[k]
                );
            }
        }
    }
    s
}

/// `label,rho_px,value,pairs,excluded` for labelled peak profiles.
pub fn peaks_csv(profiles: &[(&str, &PeakProfile)]) -> String {
    let mut s = String::from("label,rho_px,value,pairs,excluded\n");
    for (label, p) in profiles {
        for i in 0..p.rho.len() {
            let _ = writeln!(s, "{label},{},{},{},{}", p.rho[i], p.value[i], p.pairs[i], p.excluded[i] as u8);
        }
    }
    s
}

/// `dx,dy,p` for every offset of the map.
pub fn crosstalk_csv(map: &CrosstalkMap) -> String {
    let r = map.radius() as i32;
    let mut s = String::from("dx,dy,p\n");
    for dy in -r..=r {
        for dx in -r..=r {
            let _ = writeln!(s, "{dx},{dy},{}", map.get(dx, dy));
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::correlator::WindowConfig;
    use crate::geometry::{PixelCoord, SensorGeometry};
    use crate::sensor::{EventRecord, Frame};

    #[test]
    fn dt_hist_is_symmetric_text() {
        let mut acc = CorrelationAccumulator::new(SensorGeometry::default(), 255, WindowConfig::default()).unwrap();
        acc.add_frame(&Frame::new(
            0,
            vec![
                EventRecord { pixel: PixelCoord::new(1, 1), tdc: 3 },
                EventRecord { pixel: PixelCoord::new(2, 1), tdc: 5 },
            ],
        ))
        .unwrap();
        let csv = dt_hist_csv(&acc);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 509);
        assert_eq!(lines[1], "-254,0");
        assert!(lines.contains(&"-2,1000000") && lines.contains(&"2,1000000"));
    }

    #[test]
    fn crosstalk_csv_rows() {
        let csv = crosstalk_csv(&CrosstalkMap::zeros(2));
        assert_eq!(csv.lines().count(), 1 + 25);
    }
}
