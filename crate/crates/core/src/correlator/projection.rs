use serde::{Deserialize, Serialize};

use super::corrected::CorrectedG2;

/// Square joint table over one transverse axis, `values[a * n + b]` with
/// 0-based pixel coordinates `a` (photon 1) and `b` (photon 2).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisProjection {
    pub n: usize,
    pub values: Vec<f64>,
}

impl AxisProjection {
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }
}

/// `G²(x1,x2) = Σ_{y1,y2} g2` and `G²(y1,y2) = Σ_{x1,x2} g2`.
pub fn project_axes(g2: &CorrectedG2) -> (AxisProjection, AxisProjection) {
    let g = g2.geometry();
    let (nx, ny) = (g.n_x as usize, g.n_y as usize);
    let n = g.n_pixels();
    let mut px = vec![0.0; nx * nx];
    let mut py = vec![0.0; ny * ny];
    let values = g2.values();
    for a in 0..n {
        let (ax, ay) = (a % nx, a / nx);
        let row = &values[a * n..(a + 1) * n];
        for (b, &v) in row.iter().enumerate() {
            if v != 0.0 {
                px[ax * nx + b % nx] += v;
                py[ay * ny + b / nx] += v;
            }
        }
    }
    (AxisProjection { n: nx, values: px }, AxisProjection { n: ny, values: py })
}

/// A 2D grid of offset bins with the number of pixel pairs feeding each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetGrid {
    pub side_x: usize,
    pub side_y: usize,
    /// Pixel-unit coordinate of bin 0 along x and y.
    pub origin: (i32, i32),
    pub values: Vec<f64>,
    pub pairs: Vec<u32>,
}

impl OffsetGrid {
    fn new(side_x: usize, side_y: usize, origin: (i32, i32)) -> Self {
        Self { side_x, side_y, origin, values: vec![0.0; side_x * side_y], pairs: vec![0; side_x * side_y] }
    }

    fn index(&self, u: i32, v: i32) -> Option<usize> {
        let i = u - self.origin.0;
        let j = v - self.origin.1;
        if i < 0 || j < 0 || i as usize >= self.side_x || j as usize >= self.side_y {
            return None;
        }
        Some(j as usize * self.side_x + i as usize)
    }

    /// Value at integer pixel coordinate `(u, v)`.
    pub fn get(&self, u: i32, v: i32) -> f64 {
        self.index(u, v).map_or(0.0, |k| self.values[k])
    }

    pub fn pairs_at(&self, u: i32, v: i32) -> u32 {
        self.index(u, v).map_or(0, |k| self.pairs[k])
    }

    /// Collapse onto x (`axis = 0`) or y (`axis = 1`), returning
    /// `(coordinate, summed value, summed pair count)` per bin.
    pub fn marginal(&self, axis: usize) -> Vec<(i32, f64, u64)> {
        let (len, origin) = if axis == 0 { (self.side_x, self.origin.0) } else { (self.side_y, self.origin.1) };
        let mut out: Vec<(i32, f64, u64)> = (0..len).map(|i| (origin + i as i32, 0.0, 0)).collect();
        for j in 0..self.side_y {
            for i in 0..self.side_x {
                let k = j * self.side_x + i;
                let bin = if axis == 0 { i } else { j };
                out[bin].1 += self.values[k];
                out[bin].2 += self.pairs[k] as u64;
            }
        }
        out
    }
}

/// Centroid and difference projections in integer pixel units.
///
/// `diff` is binned by `p1 − p2`, `sum` by `p1 + p2` (1-based pixel
/// coordinates). In rotated coordinates `ρ± = (ρ1 ± ρ2)/√2`, so physical
/// axes are these integers times `pitch/√2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SumDiffProjection {
    pub sum: OffsetGrid,
    pub diff: OffsetGrid,
}

pub fn project_sum_diff(g2: &CorrectedG2) -> SumDiffProjection {
    let g = g2.geometry();
    let (nx, ny) = (g.n_x as usize, g.n_y as usize);
    let n = g.n_pixels();
    let (sx, sy) = (2 * nx - 1, 2 * ny - 1);
    let mut sum = OffsetGrid::new(sx, sy, (2, 2));
    let mut diff = OffsetGrid::new(sx, sy, (1 - nx as i32, 1 - ny as i32));
    let values = g2.values();
    for a in 0..n {
        let (ax, ay) = (a % nx, a / nx);
        for b in 0..n {
            if g2.is_excluded(a, b) {
                continue;
            }
            let (bx, by) = (b % nx, b / nx);
            let v = values[a * n + b];
            let ks = (ay + by) * sx + ax + bx;
            let kd = (ay + ny - 1 - by) * sx + ax + nx - 1 - bx;
            sum.values[ks] += v;
            sum.pairs[ks] += 1;
            diff.values[kd] += v;
            diff.pairs[kd] += 1;
        }
    }
    SumDiffProjection { sum, diff }
}
