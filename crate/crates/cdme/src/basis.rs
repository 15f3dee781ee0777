//! Orthonormal Neumann eigenbasis of the operator -d^2/dx^2 + lambda_d(x)
//! on [0, 1], plus spectral projections of rate fields.
//!
//! Two constructions are available. For a constant degradation rate the
//! eigenpairs are analytic: alpha_k = (k pi)^2 + lambda_d with k = 0, 1, ...
//! and the orthonormal cosines xi_0 = 1, xi_k = sqrt(2) cos(k pi x). For a
//! general nonnegative field the operator is discretized with second-order
//! ghost-point Neumann stencils, symmetrized by the trapezoidal weights and
//! handed to the tridiagonal eigensolver. Eigenvectors are normalized in the
//! trapezoidal L^2 norm and sign-fixed so xi_k(0) >= 0.
//!
//! Mode indices are 0-based throughout: mode 0 is the constant eigenfunction.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{CdmeError, Result};
use crate::grid::Grid;
use crate::rates::RateField;
use crate::tridiag::SymTridiag;

/// Default spatial resolution used by the CLI and the solvers.
pub const DEFAULT_GRID_LEN: usize = 2001;
/// Default series truncation used by the built-in scenarios.
pub const DEFAULT_TRUNCATION: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisProvenance {
    AnalyticCosine,
    NumericSturmLiouville,
}

#[derive(Debug)]
pub struct EigenBasis {
    provenance: BasisProvenance,
    eigenvalues: Vec<f64>,
    grid: Grid,
    /// Nodal samples per mode; `None` for the analytic family.
    columns: Option<Vec<Vec<f64>>>,
    /// Integral of each eigenfunction over [0, 1].
    integrals: Vec<f64>,
}

/// Analytic cosine basis for a constant degradation rate lambda_d > 0.
pub fn build_cosine_basis(lambda_d: f64, n: usize, m: usize) -> Result<EigenBasis> {
    if !lambda_d.is_finite() || lambda_d <= 0.0 {
        return Err(CdmeError::NonPositiveDegradation(lambda_d));
    }
    if n == 0 {
        return Err(CdmeError::InvalidRateField(
            "basis needs at least one mode".into(),
        ));
    }
    let grid = Grid::new(m)?;
    let eigenvalues = (0..n).map(|k| (k as f64 * PI).powi(2) + lambda_d).collect();
    let mut integrals = vec![0.0; n];
    integrals[0] = 1.0;
    Ok(EigenBasis {
        provenance: BasisProvenance::AnalyticCosine,
        eigenvalues,
        grid,
        columns: None,
        integrals,
    })
}

/// Numeric eigenbasis for a general nonnegative degradation field.
pub fn build_numeric_basis(lambda_d: &RateField, n: usize, m: usize) -> Result<EigenBasis> {
    let grid = Grid::new(m)?;
    if n == 0 {
        return Err(CdmeError::InvalidRateField(
            "basis needs at least one mode".into(),
        ));
    }
    if n > m {
        return Err(CdmeError::GridMismatch(format!(
            "cannot extract {n} modes from a {m}-node discretization"
        )));
    }
    let ld = lambda_d.sample_on(&grid)?;
    if let Some(bad) = ld.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(CdmeError::InvalidRateField(format!(
            "degradation sample {bad} is negative or not finite"
        )));
    }

    let h = grid.spacing();
    let h2 = h * h;
    let diag: Vec<f64> = (0..m).map(|i| 2.0 / h2 + ld[i]).collect();
    let mut off = vec![-1.0 / h2; m - 1];
    off[0] = -SQRT_2 / h2;
    off[m - 2] = -SQRT_2 / h2;

    let (eigenvalues, raw) = SymTridiag::new(diag, off).smallest_eigenpairs(n)?;
    if eigenvalues[0] <= 1e-12 {
        return Err(CdmeError::AssumptionOneViolated(eigenvalues[0]));
    }

    // Undo the symmetrizing similarity: u_i = y_i / sqrt(w_i). The result is
    // automatically unit-norm in the trapezoidal inner product.
    let columns: Vec<Vec<f64>> = raw
        .into_iter()
        .map(|y| {
            let mut u: Vec<f64> = y
                .iter()
                .enumerate()
                .map(|(i, yi)| yi / grid.weight(i).sqrt())
                .collect();
            let peak = u.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
            let tie = 1e-9 * peak;
            let lead = if u[0].abs() > tie {
                u[0]
            } else {
                u.iter().find(|v| v.abs() > tie).copied().unwrap_or(1.0)
            };
            if lead < 0.0 {
                for v in &mut u {
                    *v = -*v;
                }
            }
            u
        })
        .collect();

    let integrals = columns.iter().map(|c| grid.trapezoid(c)).collect();
    Ok(EigenBasis {
        provenance: BasisProvenance::NumericSturmLiouville,
        eigenvalues,
        grid,
        columns: Some(columns),
        integrals,
    })
}

impl EigenBasis {
    pub fn provenance(&self) -> BasisProvenance {
        self.provenance
    }

    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eigenvalue(&self, k: usize) -> f64 {
        self.eigenvalues[k]
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Integral of eigenfunction `k` over the domain.
    pub fn integral(&self, k: usize) -> f64 {
        self.integrals[k]
    }

    /// Pointwise evaluation of eigenfunction `k`.
    pub fn eval(&self, k: usize, x: f64) -> f64 {
        match &self.columns {
            None => {
                if k == 0 {
                    1.0
                } else {
                    SQRT_2 * (k as f64 * PI * x).cos()
                }
            }
            Some(cols) => self.grid.interpolate(&cols[k], x),
        }
    }

    /// Nodal samples of eigenfunction `k` on the stored grid.
    pub fn sampled_column(&self, k: usize) -> Vec<f64> {
        match &self.columns {
            None => self.grid.points().map(|x| self.eval(k, x)).collect(),
            Some(cols) => cols[k].clone(),
        }
    }

    /// Spectral coefficients of a rate field in this basis. Dirac atoms are
    /// projected analytically (mass times the eigenfunction value), tabulated
    /// and synthesized fields by trapezoidal quadrature.
    pub fn project(&self, field: &RateField) -> Result<Vec<f64>> {
        let n = self.n_modes();
        match field {
            RateField::Constant(v) => Ok((0..n).map(|k| v * self.integral(k)).collect()),
            RateField::DiracDelta { location, mass } => {
                Ok((0..n).map(|k| mass * self.eval(k, *location)).collect())
            }
            RateField::Spectral {
                coefficients,
                basis,
            } if std::ptr::eq(self, basis.as_ref()) => {
                let mut out = coefficients.clone();
                out.resize(n, 0.0);
                out.truncate(n);
                Ok(out)
            }
            _ => {
                let samples = field.sample_on(&self.grid).map_err(|e| match e {
                    CdmeError::MollificationRequired => CdmeError::MollificationRequired,
                    other => other,
                })?;
                Ok((0..n)
                    .map(|k| self.quadrature_against(k, &samples))
                    .collect())
            }
        }
    }

    fn quadrature_against(&self, k: usize, samples: &[f64]) -> f64 {
        match &self.columns {
            Some(cols) => samples
                .iter()
                .zip(&cols[k])
                .enumerate()
                .map(|(i, (f, xi))| self.grid.weight(i) * f * xi)
                .sum(),
            None => samples
                .iter()
                .enumerate()
                .map(|(i, f)| self.grid.weight(i) * f * self.eval(k, self.grid.x(i)))
                .sum(),
        }
    }

    /// Largest deviation of the Gram matrix from the identity over the first
    /// `upto` modes, measured with the stored quadrature.
    pub fn gram_max_deviation(&self, upto: usize) -> f64 {
        let upto = upto.min(self.n_modes());
        let cols: Vec<Vec<f64>> = (0..upto).map(|k| self.sampled_column(k)).collect();
        let mut worst = 0.0f64;
        for j in 0..upto {
            for k in j..upto {
                let mut dot = 0.0;
                for (i, (a, b)) in cols[j].iter().zip(&cols[k]).enumerate() {
                    dot += self.grid.weight(i) * a * b;
                }
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }

    /// Magnitude of the second-order one-sided derivative of eigenfunction
    /// `k` at the two walls; vanishes at O(h^2) under Neumann conditions.
    pub fn neumann_defect(&self, k: usize) -> f64 {
        let col = self.sampled_column(k);
        let h = self.grid.spacing();
        let m = col.len();
        let left = (-3.0 * col[0] + 4.0 * col[1] - col[2]) / (2.0 * h);
        let right = (3.0 * col[m - 1] - 4.0 * col[m - 2] + col[m - 3]) / (2.0 * h);
        left.abs().max(right.abs())
    }
}

/// Projections of the creation and degradation fields plus the total
/// creation rate gamma.
#[derive(Debug, Clone)]
pub struct SpectralProjection {
    c: Vec<f64>,
    d: Vec<f64>,
    gamma: f64,
}

impl SpectralProjection {
    pub fn new(lambda_c: &RateField, lambda_d: &RateField, basis: &EigenBasis) -> Result<Self> {
        Ok(Self {
            c: basis.project(lambda_c)?,
            d: basis.project(lambda_d)?,
            gamma: lambda_c.integral(),
        })
    }

    pub fn from_parts(c: Vec<f64>, d: Vec<f64>, gamma: f64) -> Self {
        assert_eq!(c.len(), d.len());
        Self { c, d, gamma }
    }

    pub fn creation(&self) -> &[f64] {
        &self.c
    }

    pub fn degradation(&self) -> &[f64] {
        &self.d
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn n_modes(&self) -> usize {
        self.c.len()
    }

    /// |sum_k c_k d_k / alpha_k - gamma|, which tends to zero as the
    /// truncation grows; exact whenever the degradation field is finitely
    /// supported in the basis.
    pub fn gamma_identity_deviation(&self, eigenvalues: &[f64]) -> f64 {
        let sum: f64 = self
            .c
            .iter()
            .zip(&self.d)
            .zip(eigenvalues)
            .map(|((c, d), a)| c * d / a)
            .sum();
        (sum - self.gamma).abs()
    }
}

/// True iff |d_k| <= 1e-10 for every mode index k >= n0 (so the degradation
/// field is spanned by the first n0 modes).
pub fn check_assumption_two(d: &[f64], n0: usize) -> bool {
    d.iter().skip(n0).all(|v| v.abs() <= 1e-10)
}
