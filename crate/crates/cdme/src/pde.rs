//! The reaction-diffusion field v(t, x) solving
//!
//! ```text
//! dv/dt = v'' - lambda_d(x) v + lambda_c(x),   v(0, x) = 0,   v'(0) = v'(1) = 0,
//! ```
//!
//! by two interchangeable strategies: a spectral series over the Neumann
//! eigenbasis (exact in time, truncated in modes) and a Crank-Nicolson
//! time-stepper (second order in space and time). Both live behind the
//! [`FieldSolver`] trait and are selected by name at runtime; each also keeps
//! its direct entry point for callers that need full control.
//!
//! The spectral evaluator is the closed form sum_k c_k g_k(t) xi_k(x) with
//! g_k(t) = (1 - exp(-alpha_k t)) / alpha_k, so it is defined for every
//! t >= 0. The finite-difference solution interpolates its snapshot store.
//! Stored snapshots are clamped at zero: v is the intensity of a point
//! process, and the truncated series can undershoot by its truncation error
//! near a Dirac atom. The live evaluator is left unclamped so spectral
//! identities survive to machine precision.

use crate::basis::{build_cosine_basis, build_numeric_basis, EigenBasis, SpectralProjection};
use crate::error::{CdmeError, Result};
use crate::grid::Grid;
use crate::rates::RateField;
use std::sync::Arc;

/// Default number of Crank-Nicolson steps.
pub const DEFAULT_FD_STEPS: usize = 1000;
/// Default width of the triangular bump replacing a Dirac source in
/// finite-difference solves.
pub const DEFAULT_MOLLIFY_WIDTH: f64 = 1e-3;
/// Default number of stored snapshots.
pub const DEFAULT_SNAPSHOTS: usize = 200;

/// Relaxation factor g(alpha, t) = (1 - exp(-alpha t)) / alpha, computed
/// stably for small alpha t.
#[inline]
pub fn relaxation(alpha: f64, t: f64) -> f64 {
    -f64::exp_m1(-alpha * t) / alpha
}

/// Snapshot schedule covering [0, t_max]: a geometric ramp through the fast
/// transient followed by a linear tail to the plateau.
pub fn snapshot_schedule(t_max: f64, count: usize) -> Vec<f64> {
    assert!(t_max > 0.0, "horizon must be positive");
    let count = count.max(4);
    let n_geo = count / 2;
    let n_lin = count - 1 - n_geo;
    let t_first = t_max * 1e-4;
    let t_mid = t_max * 0.1;
    let ratio = (t_mid / t_first).powf(1.0 / (n_geo as f64 - 1.0));

    let mut times = Vec::with_capacity(count);
    times.push(0.0);
    let mut t = t_first;
    for _ in 0..n_geo {
        times.push(t);
        t *= ratio;
    }
    for i in 1..=n_lin {
        times.push(t_mid + (t_max - t_mid) * i as f64 / n_lin as f64);
    }
    times.dedup_by(|a, b| (*a - *b).abs() < 1e-15 * t_max);
    times
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Spectral,
    FiniteDifference,
}

#[derive(Debug)]
enum Backend {
    Spectral {
        basis: Arc<EigenBasis>,
        coeffs: Vec<f64>,
    },
    Interpolated,
}

/// The solved field: a live evaluator plus a snapshot store on (times, grid).
#[derive(Debug)]
pub struct PdeSolution {
    method: SolveMethod,
    grid: Grid,
    times: Vec<f64>,
    snapshots: Vec<Vec<f64>>,
    masses: Vec<f64>,
    backend: Backend,
}

impl PdeSolution {
    pub fn method(&self) -> SolveMethod {
        self.method
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Stored (clamped) field values at snapshot index `j`.
    pub fn snapshot(&self, j: usize) -> &[f64] {
        &self.snapshots[j]
    }

    /// The eigenbasis behind a spectral solution.
    pub fn basis(&self) -> Option<&Arc<EigenBasis>> {
        match &self.backend {
            Backend::Spectral { basis, .. } => Some(basis),
            Backend::Interpolated => None,
        }
    }

    /// Spectral coefficients c_k of the creation field, when available.
    pub fn coefficients(&self) -> Option<&[f64]> {
        match &self.backend {
            Backend::Spectral { coeffs, .. } => Some(coeffs),
            Backend::Interpolated => None,
        }
    }

    /// Field value at (t, x). Spectral solutions evaluate the series; the
    /// finite-difference backend interpolates its snapshots bilinearly.
    pub fn value(&self, t: f64, x: f64) -> f64 {
        match &self.backend {
            Backend::Spectral { basis, coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * relaxation(basis.eigenvalue(k), t) * basis.eval(k, x))
                .sum(),
            Backend::Interpolated => {
                let (j, frac) = self.time_bracket(t);
                let lo = self.grid.interpolate(&self.snapshots[j], x);
                if frac == 0.0 {
                    lo
                } else {
                    let hi = self.grid.interpolate(&self.snapshots[j + 1], x);
                    lo * (1.0 - frac) + hi * frac
                }
            }
        }
    }

    /// Mass m(t) = integral of v(t, .) over the domain.
    pub fn mass(&self, t: f64) -> f64 {
        match &self.backend {
            Backend::Spectral { basis, coeffs } => coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * relaxation(basis.eigenvalue(k), t) * basis.integral(k))
                .sum(),
            Backend::Interpolated => {
                let (j, frac) = self.time_bracket(t);
                if frac == 0.0 {
                    self.masses[j]
                } else {
                    self.masses[j] * (1.0 - frac) + self.masses[j + 1] * frac
                }
            }
        }
    }

    /// Field profile on the stored grid at an arbitrary time.
    pub fn sampled_profile(&self, t: f64) -> Vec<f64> {
        match &self.backend {
            Backend::Spectral { basis, coeffs } => {
                let weights: Vec<f64> = coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| c * relaxation(basis.eigenvalue(k), t))
                    .collect();
                let mut row = vec![0.0; self.grid.len()];
                for (k, w) in weights.iter().enumerate() {
                    if *w == 0.0 {
                        continue;
                    }
                    let col = basis.sampled_column(k);
                    for (r, xi) in row.iter_mut().zip(&col) {
                        *r += w * xi;
                    }
                }
                row
            }
            Backend::Interpolated => {
                let (j, frac) = self.time_bracket(t);
                if frac == 0.0 {
                    self.snapshots[j].clone()
                } else {
                    self.snapshots[j]
                        .iter()
                        .zip(&self.snapshots[j + 1])
                        .map(|(a, b)| a * (1.0 - frac) + b * frac)
                        .collect()
                }
            }
        }
    }

    fn time_bracket(&self, t: f64) -> (usize, f64) {
        let times = &self.times;
        if t <= times[0] {
            return (0, 0.0);
        }
        if t >= *times.last().unwrap() {
            return (times.len() - 1, 0.0);
        }
        let j = match times.binary_search_by(|probe| probe.partial_cmp(&t).unwrap()) {
            Ok(j) => return (j, 0.0),
            Err(j) => j - 1,
        };
        let frac = (t - times[j]) / (times[j + 1] - times[j]);
        (j, frac)
    }

    /// Pointwise defect |dv/dt - v'' + lambda_d v - lambda_c| evaluated on the
    /// snapshot store at the stored sample nearest to (t, x). Time derivative
    /// by a nonuniform 3-point stencil, space by the central second
    /// difference, so smooth fields are required for a meaningful answer.
    pub fn residual(
        &self,
        lambda_c: &RateField,
        lambda_d: &RateField,
        t: f64,
        x: f64,
    ) -> Result<f64> {
        if self.times.len() < 3 {
            return Err(CdmeError::InsufficientSnapshots(3));
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(CdmeError::PositionOutOfDomain(x));
        }
        let j = self
            .times
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| (*a - t).abs().partial_cmp(&(*b - t).abs()).unwrap())
            .map(|(j, _)| j)
            .unwrap()
            .clamp(1, self.times.len() - 2);
        let i = self.grid.nearest(x).clamp(1, self.grid.len() - 2);

        let (tm, t0, tp) = (self.times[j - 1], self.times[j], self.times[j + 1]);
        let (hm, hp) = (t0 - tm, tp - t0);
        let vm = self.snapshots[j - 1][i];
        let v0 = self.snapshots[j][i];
        let vp = self.snapshots[j + 1][i];
        let dv_dt =
            -hp / (hm * (hm + hp)) * vm + (hp - hm) / (hm * hp) * v0 + hm / (hp * (hm + hp)) * vp;

        let h = self.grid.spacing();
        let row = &self.snapshots[j];
        let d2v = (row[i - 1] - 2.0 * v0 + row[i + 1]) / (h * h);

        let xi = self.grid.x(i);
        Ok((dv_dt - d2v + lambda_d.value_at(xi) * v0 - lambda_c.value_at(xi)).abs())
    }
}

/// Evaluate the truncated spectral series on the snapshot schedule.
pub fn solve_spectral(
    proj: &SpectralProjection,
    basis: Arc<EigenBasis>,
    times: &[f64],
) -> PdeSolution {
    assert_eq!(
        proj.n_modes(),
        basis.n_modes(),
        "projection and basis truncations differ"
    );
    let grid = *basis.grid();
    let coeffs = proj.creation().to_vec();
    let columns: Vec<Vec<f64>> = (0..basis.n_modes())
        .map(|k| basis.sampled_column(k))
        .collect();

    let snapshots: Vec<Vec<f64>> = times
        .iter()
        .map(|&t| {
            let mut row = vec![0.0; grid.len()];
            for (k, c) in coeffs.iter().enumerate() {
                let w = c * relaxation(basis.eigenvalue(k), t);
                if w == 0.0 {
                    continue;
                }
                for (r, xi) in row.iter_mut().zip(&columns[k]) {
                    *r += w * xi;
                }
            }
            for r in &mut row {
                *r = r.max(0.0);
            }
            row
        })
        .collect();

    let masses: Vec<f64> = times
        .iter()
        .map(|&t| {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| c * relaxation(basis.eigenvalue(k), t) * basis.integral(k))
                .sum()
        })
        .collect();

    PdeSolution {
        method: SolveMethod::Spectral,
        grid,
        times: times.to_vec(),
        snapshots,
        masses,
        backend: Backend::Spectral { basis, coeffs },
    }
}

/// Crank-Nicolson stepper with ghost-point Neumann boundaries. Requested
/// snapshot times are snapped to the step grid. Dirac fields are rejected;
/// mollify them first.
pub fn solve_crank_nicolson(
    lambda_c: &RateField,
    lambda_d: &RateField,
    t_max: f64,
    steps: usize,
    m: usize,
    times: &[f64],
) -> Result<PdeSolution> {
    if lambda_c.is_dirac() || lambda_d.is_dirac() {
        return Err(CdmeError::MollificationRequired);
    }
    if !t_max.is_finite() || t_max <= 0.0 || steps < 2 {
        return Err(CdmeError::InvalidRateField(format!(
            "need positive horizon and at least 2 steps, got t_max={t_max}, steps={steps}"
        )));
    }
    let grid = Grid::new(m)?;
    let lc = lambda_c.sample_on(&grid)?;
    let ld = lambda_d.sample_on(&grid)?;
    let h = grid.spacing();
    let h2 = h * h;
    let dt = t_max / steps as f64;

    let mut snap_steps: Vec<usize> = times
        .iter()
        .map(|&t| ((t / dt).round() as usize).min(steps))
        .collect();
    snap_steps.sort_unstable();
    snap_steps.dedup();

    // LHS = I + dt/2 (-D2 + lambda_d); factor once (Thomas), reuse per step.
    let r = dt / (2.0 * h2);
    let diag: Vec<f64> = (0..m)
        .map(|i| 1.0 + dt * (1.0 / h2 + 0.5 * ld[i]))
        .collect();
    let lower = |i: usize| if i == m - 1 { -2.0 * r } else { -r };
    let upper = |i: usize| if i == 0 { -2.0 * r } else { -r };

    let mut denom = vec![0.0; m];
    let mut cprime = vec![0.0; m - 1];
    denom[0] = diag[0];
    if denom[0] == 0.0 {
        return Err(CdmeError::LinearSolveFailure(0));
    }
    cprime[0] = upper(0) / denom[0];
    for i in 1..m {
        denom[i] = diag[i] - lower(i) * cprime[i - 1];
        if denom[i] == 0.0 {
            return Err(CdmeError::LinearSolveFailure(i));
        }
        if i < m - 1 {
            cprime[i] = upper(i) / denom[i];
        }
    }

    let mut v = vec![0.0f64; m];
    let mut rhs = vec![0.0f64; m];
    let mut stored_times = Vec::with_capacity(snap_steps.len());
    let mut snapshots = Vec::with_capacity(snap_steps.len());
    let mut next_snap = 0usize;

    let record =
        |step: usize, v: &[f64], stored_times: &mut Vec<f64>, snapshots: &mut Vec<Vec<f64>>| {
            stored_times.push(step as f64 * dt);
            snapshots.push(v.iter().map(|x| x.max(0.0)).collect());
        };

    if snap_steps.first() == Some(&0) {
        record(0, &v, &mut stored_times, &mut snapshots);
        next_snap = 1;
    }

    for step in 1..=steps {
        // RHS = (I - dt/2 A) v + dt lambda_c
        for i in 0..m {
            let neighbors = if i == 0 {
                2.0 * v[1]
            } else if i == m - 1 {
                2.0 * v[m - 2]
            } else {
                v[i - 1] + v[i + 1]
            };
            rhs[i] = v[i] * (1.0 - dt * (1.0 / h2 + 0.5 * ld[i])) + r * neighbors + dt * lc[i];
        }
        // Thomas solve into v
        v[0] = rhs[0] / denom[0];
        for i in 1..m {
            v[i] = (rhs[i] - lower(i) * v[i - 1]) / denom[i];
        }
        for i in (0..m - 1).rev() {
            v[i] -= cprime[i] * v[i + 1];
        }
        if next_snap < snap_steps.len() && snap_steps[next_snap] == step {
            record(step, &v, &mut stored_times, &mut snapshots);
            next_snap += 1;
        }
    }

    let masses: Vec<f64> = snapshots.iter().map(|row| grid.trapezoid(row)).collect();
    Ok(PdeSolution {
        method: SolveMethod::FiniteDifference,
        grid,
        times: stored_times,
        snapshots,
        masses,
        backend: Backend::Interpolated,
    })
}

/// Everything a solver strategy needs to produce a field.
#[derive(Debug, Clone)]
pub struct SolveRequest<'a> {
    pub lambda_c: &'a RateField,
    pub lambda_d: &'a RateField,
    /// Series truncation for the spectral route.
    pub modes: usize,
    pub grid_len: usize,
    pub t_max: f64,
    pub snapshot_times: Vec<f64>,
    /// Time steps for the finite-difference route.
    pub fd_steps: usize,
    /// Bump width used to mollify Dirac sources in the FD route.
    pub mollify_width: f64,
}

/// A named, interchangeable strategy for solving the field equation.
pub trait FieldSolver: Sync {
    fn name(&self) -> &'static str;
    fn description(&self) -> &'static str;
    fn solve(&self, req: &SolveRequest) -> Result<PdeSolution>;
}

pub struct SpectralSolver;

impl FieldSolver for SpectralSolver {
    fn name(&self) -> &'static str {
        "spectral"
    }

    fn description(&self) -> &'static str {
        "truncated eigenfunction series; exact in time, handles Dirac sources"
    }

    fn solve(&self, req: &SolveRequest) -> Result<PdeSolution> {
        let basis = match req.lambda_d {
            RateField::Constant(v) => build_cosine_basis(*v, req.modes, req.grid_len)?,
            other => build_numeric_basis(other, req.modes, req.grid_len)?,
        };
        let basis = Arc::new(basis);
        let proj = SpectralProjection::new(req.lambda_c, req.lambda_d, &basis)?;
        Ok(solve_spectral(&proj, basis, &req.snapshot_times))
    }
}

pub struct CrankNicolsonSolver;

impl FieldSolver for CrankNicolsonSolver {
    fn name(&self) -> &'static str {
        "crank-nicolson"
    }

    fn description(&self) -> &'static str {
        "second-order finite differences; Dirac sources are mollified"
    }

    fn solve(&self, req: &SolveRequest) -> Result<PdeSolution> {
        let grid = Grid::new(req.grid_len)?;
        let lc = req.lambda_c.mollified(req.mollify_width, &grid)?;
        let ld = req.lambda_d.mollified(req.mollify_width, &grid)?;
        solve_crank_nicolson(
            &lc,
            &ld,
            req.t_max,
            req.fd_steps,
            req.grid_len,
            &req.snapshot_times,
        )
    }
}

/// All registered solver strategies.
pub static SOLVERS: &[&dyn FieldSolver] = &[&SpectralSolver, &CrankNicolsonSolver];

/// Look a solver up by its registry name.
pub fn find_solver(name: &str) -> Result<&'static dyn FieldSolver> {
    SOLVERS
        .iter()
        .copied()
        .find(|s| s.name() == name)
        .ok_or_else(|| CdmeError::UnknownSolver(name.to_string()))
}
