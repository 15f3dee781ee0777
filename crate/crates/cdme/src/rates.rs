//! Creation and degradation propensity fields on the unit interval.
//!
//! A field is a nonnegative rate density lambda(x) with units 1/time. The
//! Dirac variant is kept symbolic: projections and birth sampling treat the
//! atom exactly, and grid-based solvers must mollify it first.

use std::sync::Arc;

use crate::basis::EigenBasis;
use crate::error::{CdmeError, Result};
use crate::grid::Grid;

#[derive(Debug, Clone)]
pub enum RateField {
    /// Uniform rate over the whole interval.
    Constant(f64),
    /// Point source: `mass` concentrated at `location`.
    DiracDelta { location: f64, mass: f64 },
    /// Samples on a uniform grid spanning [0, 1], both endpoints included.
    Tabulated(Vec<f64>),
    /// Coefficients in the orthonormal eigenbasis of some operator.
    Spectral {
        coefficients: Vec<f64>,
        basis: Arc<EigenBasis>,
    },
}

impl RateField {
    pub fn constant(value: f64) -> Result<Self> {
        if !value.is_finite() || value < 0.0 {
            return Err(CdmeError::InvalidRateField(format!(
                "constant rate must be nonnegative, got {value}"
            )));
        }
        Ok(Self::Constant(value))
    }

    pub fn dirac(location: f64, mass: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&location) {
            return Err(CdmeError::InvalidRateField(format!(
                "Dirac location {location} outside [0, 1]"
            )));
        }
        if !mass.is_finite() || mass < 0.0 {
            return Err(CdmeError::InvalidRateField(format!(
                "Dirac mass must be nonnegative, got {mass}"
            )));
        }
        Ok(Self::DiracDelta { location, mass })
    }

    pub fn tabulated(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(CdmeError::InvalidRateField(
                "tabulated field needs at least 2 samples".into(),
            ));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(CdmeError::InvalidRateField(format!(
                "tabulated sample {bad} is negative or not finite"
            )));
        }
        Ok(Self::Tabulated(values))
    }

    /// Spectral synthesis; the series may undershoot zero between nodes, so
    /// no sign validation is applied here.
    pub fn spectral(coefficients: Vec<f64>, basis: Arc<EigenBasis>) -> Self {
        Self::Spectral {
            coefficients,
            basis,
        }
    }

    pub fn is_dirac(&self) -> bool {
        matches!(self, Self::DiracDelta { .. })
    }

    /// Total rate gamma = integral of the field over [0, 1].
    pub fn integral(&self) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::DiracDelta { mass, .. } => *mass,
            Self::Tabulated(values) => {
                let grid = Grid::new(values.len()).expect("validated at construction");
                grid.trapezoid(values)
            }
            Self::Spectral {
                coefficients,
                basis,
            } => coefficients
                .iter()
                .enumerate()
                .map(|(k, c)| c * basis.integral(k))
                .sum(),
        }
    }

    /// Pointwise value. The Dirac atom itself evaluates to infinity; away
    /// from it the density is zero.
    pub fn value_at(&self, x: f64) -> f64 {
        match self {
            Self::Constant(v) => *v,
            Self::DiracDelta { location, .. } if x == *location => f64::INFINITY,
            Self::DiracDelta { .. } => 0.0,
            Self::Tabulated(values) => {
                let grid = Grid::new(values.len()).expect("validated at construction");
                grid.interpolate(values, x)
            }
            Self::Spectral {
                coefficients,
                basis,
            } => coefficients
                .iter()
                .enumerate()
                .map(|(k, c)| c * basis.eval(k, x))
                .sum(),
        }
    }

    /// Sample the field on `grid`. Dirac fields have no grid representation.
    pub fn sample_on(&self, grid: &Grid) -> Result<Vec<f64>> {
        match self {
            Self::Constant(v) => Ok(vec![*v; grid.len()]),
            Self::DiracDelta { .. } => Err(CdmeError::MollificationRequired),
            Self::Tabulated(values) => {
                if values.len() != grid.len() {
                    return Err(CdmeError::GridMismatch(format!(
                        "tabulated field has {} samples, grid has {} nodes",
                        values.len(),
                        grid.len()
                    )));
                }
                Ok(values.clone())
            }
            Self::Spectral { .. } => Ok(grid.points().map(|x| self.value_at(x)).collect()),
        }
    }

    /// Replace a Dirac atom by a normalized triangular bump of the given
    /// width, sampled on `grid`; other variants pass through unchanged.
    /// The bump is renormalized by quadrature so the total rate is exact.
    pub fn mollified(&self, width: f64, grid: &Grid) -> Result<RateField> {
        let Self::DiracDelta { location, mass } = self else {
            return Ok(self.clone());
        };
        if !width.is_finite() || width <= 0.0 {
            return Err(CdmeError::InvalidRateField(format!(
                "mollification width must be positive, got {width}"
            )));
        }
        let mut samples: Vec<f64> = grid
            .points()
            .map(|x| {
                let u = (x - location).abs() / width;
                if u < 1.0 {
                    1.0 - u
                } else {
                    0.0
                }
            })
            .collect();
        let total = grid.trapezoid(&samples);
        if total <= 0.0 {
            return Err(CdmeError::GridMismatch(format!(
                "mollification width {width} unresolved by grid spacing {}",
                grid.spacing()
            )));
        }
        for s in &mut samples {
            *s *= mass / total;
        }
        Ok(RateField::Tabulated(samples))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_enforce_invariants() {
        assert!(RateField::constant(-0.1).is_err());
        assert!(RateField::constant(f64::NAN).is_err());
        assert!(RateField::dirac(1.5, 0.5).is_err());
        assert!(RateField::dirac(0.5, -1.0).is_err());
        assert!(RateField::tabulated(vec![1.0]).is_err());
        assert!(RateField::tabulated(vec![1.0, -0.2, 0.3]).is_err());
        assert!(RateField::constant(0.0).is_ok());
        assert!(RateField::dirac(0.0, 0.5).is_ok());
    }

    #[test]
    fn integrals() {
        assert_eq!(RateField::constant(0.5).unwrap().integral(), 0.5);
        assert_eq!(RateField::dirac(0.25, 0.7).unwrap().integral(), 0.7);
        let tab = RateField::tabulated(vec![1.0; 101]).unwrap();
        assert!((tab.integral() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn dirac_needs_mollification_on_grids() {
        let grid = Grid::new(101).unwrap();
        let f = RateField::dirac(0.0, 0.5).unwrap();
        assert!(matches!(
            f.sample_on(&grid),
            Err(CdmeError::MollificationRequired)
        ));
    }

    #[test]
    fn mollified_bump_preserves_mass() {
        let grid = Grid::new(16001).unwrap();
        for loc in [0.0, 0.5, 1.0] {
            let f = RateField::dirac(loc, 0.5).unwrap();
            let m = f.mollified(1e-3, &grid).unwrap();
            assert!((m.integral() - 0.5).abs() < 1e-12, "loc {loc}");
        }
        // centered bump peaks at the atom
        let f = RateField::dirac(0.5, 0.5).unwrap();
        let RateField::Tabulated(samples) = f.mollified(1e-2, &grid).unwrap() else {
            panic!("expected tabulated mollification");
        };
        let peak = grid.nearest(0.5);
        assert!(samples[peak] > samples[peak - 50]);
        assert_eq!(samples[0], 0.0);
    }

    #[test]
    fn mollification_width_must_be_resolved() {
        let grid = Grid::new(11).unwrap();
        // atom between nodes with a width far below the spacing: every
        // sample of the bump lands at zero
        let f = RateField::dirac(0.35, 0.5).unwrap();
        let res = f.mollified(1e-6, &grid);
        assert!(res.is_err());
    }

    #[test]
    fn value_at_interpolates() {
        let f = RateField::tabulated(vec![0.0, 1.0, 0.0]).unwrap();
        assert!((f.value_at(0.25) - 0.5).abs() < 1e-15);
        assert_eq!(f.value_at(0.5), 1.0);
        let d = RateField::dirac(0.5, 1.0).unwrap();
        assert_eq!(d.value_at(0.3), 0.0);
        assert!(d.value_at(0.5).is_infinite());
    }
}
