//! Uniform grid on the unit interval and trapezoidal quadrature.
//!
//! Every grid-based routine in the crate shares this layout: `len` nodes
//! with both endpoints included, so the spacing is `1/(len-1)`. Trapezoidal
//! weights pair with the ghost-point Neumann stencils used elsewhere; both
//! are second-order accurate.

use crate::error::{CdmeError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    len: usize,
}

impl Grid {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return Err(CdmeError::GridMismatch(format!(
                "grid needs at least 2 nodes, got {len}"
            )));
        }
        Ok(Self { len })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / (self.len - 1) as f64
    }

    /// Coordinate of node `i`; exact at both endpoints.
    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 / (self.len - 1) as f64
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len).map(|i| self.x(i))
    }

    /// Trapezoidal weight of node `i`.
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i == self.len - 1 {
            0.5 * self.spacing()
        } else {
            self.spacing()
        }
    }

    /// Trapezoidal quadrature of samples living on this grid.
    pub fn trapezoid(&self, samples: &[f64]) -> f64 {
        assert_eq!(samples.len(), self.len, "sample count does not match grid");
        let interior: f64 = samples[1..self.len - 1].iter().sum();
        self.spacing() * (0.5 * (samples[0] + samples[self.len - 1]) + interior)
    }

    /// Piecewise-linear interpolation of grid samples at `x`, clamped to [0, 1].
    pub fn interpolate(&self, samples: &[f64], x: f64) -> f64 {
        assert_eq!(samples.len(), self.len, "sample count does not match grid");
        let x = x.clamp(0.0, 1.0);
        let s = x * (self.len - 1) as f64;
        let i = (s.floor() as usize).min(self.len - 2);
        let frac = s - i as f64;
        samples[i] * (1.0 - frac) + samples[i + 1] * frac
    }

    /// Index of the node nearest to `x`.
    pub fn nearest(&self, x: f64) -> usize {
        let s = (x.clamp(0.0, 1.0) * (self.len - 1) as f64).round();
        (s as usize).min(self.len - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_degenerate_grid() {
        assert!(Grid::new(1).is_err());
        assert!(Grid::new(0).is_err());
    }

    #[test]
    fn endpoints_are_exact() {
        let g = Grid::new(2001).unwrap();
        assert_eq!(g.x(0), 0.0);
        assert_eq!(g.x(2000), 1.0);
    }

    #[test]
    fn trapezoid_integrates_linear_exactly() {
        let g = Grid::new(101).unwrap();
        let samples: Vec<f64> = g.points().map(|x| 3.0 * x + 1.0).collect();
        assert!((g.trapezoid(&samples) - 2.5).abs() < 1e-14);
    }

    #[test]
    fn trapezoid_matches_weights() {
        let g = Grid::new(57).unwrap();
        let samples: Vec<f64> = g.points().map(|x| (x * 7.3).sin()).collect();
        let by_weights: f64 = samples
            .iter()
            .enumerate()
            .map(|(i, v)| g.weight(i) * v)
            .sum();
        assert!((g.trapezoid(&samples) - by_weights).abs() < 1e-15);
    }

    #[test]
    fn interpolation_hits_nodes() {
        let g = Grid::new(11).unwrap();
        let samples: Vec<f64> = g.points().map(|x| x * x).collect();
        for i in 0..11 {
            assert_eq!(g.interpolate(&samples, g.x(i)), samples[i]);
        }
        let mid = g.interpolate(&samples, 0.05);
        assert!((mid - 0.005).abs() < 1e-15); // chord between 0 and 0.01
    }
}
