//! Shared state-space geometry: rectangles and uniform node grids.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Axis-aligned rectangle `[lo1, hi1] × [lo2, hi2]` in the `(y₁, y₂)` plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lo1: f64,
    pub hi1: f64,
    pub lo2: f64,
    pub hi2: f64,
}

impl Rect {
    pub fn new(lo1: f64, hi1: f64, lo2: f64, hi2: f64) -> Result<Self> {
        let r = Self { lo1, hi1, lo2, hi2 };
        if !(r.lo1.is_finite() && r.hi1.is_finite() && r.lo2.is_finite() && r.hi2.is_finite()) {
            return Err(Error::Config("rectangle bounds must be finite".into()));
        }
        if !(r.lo1 < r.hi1 && r.lo2 < r.hi2) {
            return Err(Error::Config(format!(
                "degenerate rectangle [{}, {}] x [{}, {}]",
                r.lo1, r.hi1, r.lo2, r.hi2
            )));
        }
        Ok(r)
    }

    pub fn width1(&self) -> f64 {
        self.hi1 - self.lo1
    }

    pub fn width2(&self) -> f64 {
        self.hi2 - self.lo2
    }

    pub fn contains(&self, y1: f64, y2: f64) -> bool {
        y1 >= self.lo1 && y1 <= self.hi1 && y2 >= self.lo2 && y2 <= self.hi2
    }
}

/// Uniform rectangular node grid: `n1 × n2` nodes covering `rect`, with
/// node `(i, j)` at `(lo1 + i·Δ₁, lo2 + j·Δ₂)` and `Δ = width/(n−1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub rect: Rect,
    pub n1: usize,
    pub n2: usize,
}

impl GridGeometry {
    pub fn new(rect: Rect, n1: usize, n2: usize) -> Result<Self> {
        if n1 < 3 || n2 < 3 {
            return Err(Error::Config(format!(
                "node grid needs at least 3 nodes per axis, got {n1} x {n2}"
            )));
        }
        Ok(Self { rect, n1, n2 })
    }

    /// Builds the grid from target spacings: the node count per axis is
    /// `round(width/Δ) + 1`, so a nominal spacing like 0.15 on a width-12
    /// domain yields 81 nodes; the effective spacing is `width/(n−1)`.
    pub fn from_spacing(rect: Rect, d1: f64, d2: f64) -> Result<Self> {
        if !(d1 > 0.0 && d2 > 0.0) {
            return Err(Error::Config("grid spacings must be positive".into()));
        }
        let n1 = (rect.width1() / d1).round() as usize + 1;
        let n2 = (rect.width2() / d2).round() as usize + 1;
        Self::new(rect, n1, n2)
    }

    pub fn d1(&self) -> f64 {
        self.rect.width1() / (self.n1 - 1) as f64
    }

    pub fn d2(&self) -> f64 {
        self.rect.width2() / (self.n2 - 1) as f64
    }

    pub fn y1(&self, i: usize) -> f64 {
        self.rect.lo1 + i as f64 * self.d1()
    }

    pub fn y2(&self, j: usize) -> f64 {
        self.rect.lo2 + j as f64 * self.d2()
    }

    pub fn cell_area(&self) -> f64 {
        self.d1() * self.d2()
    }

    pub fn n_nodes(&self) -> usize {
        self.n1 * self.n2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rect_rejects_degenerate_and_non_finite() {
        assert!(Rect::new(0.0, 0.0, 0.0, 1.0).is_err());
        assert!(Rect::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(Rect::new(f64::NAN, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn spacing_construction_recovers_nominal_grid() {
        let rect = Rect::new(-6.0, 6.0, -6.0, 6.0).unwrap();
        let g = GridGeometry::from_spacing(rect, 0.15, 0.15).unwrap();
        assert_eq!((g.n1, g.n2), (81, 81));
        assert_relative_eq!(g.d1(), 0.15, max_relative = 1e-15);
        assert_relative_eq!(g.y1(80), 6.0, max_relative = 1e-15);
        assert_relative_eq!(g.y2(0), -6.0, max_relative = 1e-15);
    }

    #[test]
    fn containment_is_closed() {
        let r = Rect::new(-1.0, 1.0, 0.0, 2.0).unwrap();
        assert!(r.contains(-1.0, 0.0));
        assert!(r.contains(1.0, 2.0));
        assert!(!r.contains(1.0 + 1e-12, 1.0));
    }
}
