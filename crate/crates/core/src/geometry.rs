//! Pixel coordinates and the linear pixel index.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("pixel ({x}, {y}) outside a {n_x}x{n_y} sensor")]
    OutOfRange { x: u32, y: u32, n_x: u16, n_y: u16 },
    #[error("linear index {index} outside 1..={max}")]
    IndexOutOfRange { index: u32, max: u32 },
}

/// Pixel array dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SensorGeometry {
    pub n_x: u16,
    pub n_y: u16,
}

impl Default for SensorGeometry {
    fn default() -> Self {
        Self { n_x: 32, n_y: 32 }
    }
}

/// 1-based pixel coordinate (p_x, p_y).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PixelCoord {
    pub x: u16,
    pub y: u16,
}

impl PixelCoord {
    pub const fn new(x: u16, y: u16) -> Self {
        Self { x, y }
    }
}

impl SensorGeometry {
    pub const fn new(n_x: u16, n_y: u16) -> Self {
        Self { n_x, n_y }
    }

    pub fn n_pixels(&self) -> usize {
        self.n_x as usize * self.n_y as usize
    }

    pub fn contains(&self, p: PixelCoord) -> bool {
        (1..=self.n_x).contains(&p.x) && (1..=self.n_y).contains(&p.y)
    }

    /// p̃ = p_x + n_x·(p_y − 1), running over 1..=n_x·n_y.
    pub fn linear_index(&self, p: PixelCoord) -> Result<u16, GeometryError> {
        if !self.contains(p) {
            return Err(GeometryError::OutOfRange { x: p.x as u32, y: p.y as u32, n_x: self.n_x, n_y: self.n_y });
        }
        Ok(p.x + self.n_x * (p.y - 1))
    }

    pub fn from_linear_index(&self, index: u16) -> Result<PixelCoord, GeometryError> {
        let max = self.n_pixels() as u32;
        if index == 0 || index as u32 > max {
            return Err(GeometryError::IndexOutOfRange { index: index as u32, max });
        }
        let zero = index - 1;
        Ok(PixelCoord { x: zero % self.n_x + 1, y: zero / self.n_x + 1 })
    }

    /// 0-based flat offset used for dense arrays, row-major in y.
    #[inline]
    pub fn flat(&self, p: PixelCoord) -> usize {
        (p.y as usize - 1) * self.n_x as usize + (p.x as usize - 1)
    }

    #[inline]
    pub fn unflat(&self, flat: usize) -> PixelCoord {
        let n_x = self.n_x as usize;
        PixelCoord { x: (flat % n_x) as u16 + 1, y: (flat / n_x) as u16 + 1 }
    }
}

/// Linear index on the default 32×32 array.
pub fn linear_index(p: PixelCoord) -> Result<u16, GeometryError> {
    SensorGeometry::default().linear_index(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_index_examples() {
        assert_eq!(linear_index(PixelCoord::new(1, 1)), Ok(1));
        assert_eq!(linear_index(PixelCoord::new(32, 32)), Ok(1024));
        assert_eq!(linear_index(PixelCoord::new(5, 2)), Ok(37));
        let g = SensorGeometry::default();
        assert_eq!(g.from_linear_index(37), Ok(PixelCoord::new(5, 2)));
    }

    #[test]
    fn out_of_range() {
        assert!(linear_index(PixelCoord::new(0, 1)).is_err());
        assert!(linear_index(PixelCoord::new(33, 1)).is_err());
        let g = SensorGeometry::default();
        assert!(g.from_linear_index(0).is_err());
        assert!(g.from_linear_index(1025).is_err());
    }

    #[test]
    fn every_index_round_trips() {
        let g = SensorGeometry::new(7, 5);
        for i in 1..=35u16 {
            let p = g.from_linear_index(i).unwrap();
            assert_eq!(g.linear_index(p).unwrap(), i);
            assert_eq!(g.unflat(g.flat(p)), p);
            assert_eq!(g.flat(p) + 1, i as usize);
        }
    }
}
