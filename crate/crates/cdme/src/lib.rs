//! Exact solutions and stochastic oracles for birth-death reaction-diffusion
//! master equations on the unit interval.
//!
//! Particles of one species diffuse in [0, 1] with reflecting walls, die at a
//! position-dependent rate lambda_d(x) and are created with intensity
//! lambda_c(x). The number-resolved densities rho_n of that process factorize
//! over a single reaction-diffusion field v(t, x), which makes the particle
//! configuration a spatial Poisson point process with intensity v. This crate
//! computes v both spectrally and by finite differences, assembles the
//! factorized densities, implements the generating-function machinery behind
//! the factorization (including its Feynman-Kac Monte Carlo twin), and checks
//! everything against an independent particle-based simulation.
//!
//! Modules follow the pipeline:
//!
//! - [`rates`]: creation/degradation propensity fields.
//! - [`basis`]: Neumann eigenbasis of -d^2/dx^2 + lambda_d and projections.
//! - [`pde`]: the reaction-diffusion field v by spectral series or
//!   Crank-Nicolson, behind a name-keyed solver registry.
//! - [`distribution`]: rho_0, the factorized rho_n, count law, conditional
//!   position density and the master-equation residual check.
//! - [`generating`]: closed-form generating function, Ornstein-Uhlenbeck
//!   Feynman-Kac estimates and algebraic identity checks.
//! - [`particle`]: time-stepped particle simulation and goodness-of-fit
//!   comparisons against the analytic law.

pub mod basis;
pub mod distribution;
pub mod error;
pub mod generating;
pub mod grid;
pub mod particle;
pub mod pde;
pub mod rates;
pub mod special;
mod tridiag;

pub use basis::{
    build_cosine_basis, build_numeric_basis, check_assumption_two, BasisProvenance, EigenBasis,
    SpectralProjection, DEFAULT_GRID_LEN, DEFAULT_TRUNCATION,
};
pub use distribution::{
    cme_reference, rate_equation_mean, CdmeDistribution, CountDistribution, DEFAULT_COUNT_CAP,
};
pub use error::{CdmeError, Result};
pub use generating::{GenSolution, IdentityReport};
pub use grid::Grid;
pub use particle::{
    compare_stats, run_ensemble, simulate_trajectory, CompareOptions, CompareReport, EnsembleStats,
    SimConfig, SnapshotComparison, TrajectoryRecord, DEFAULT_BINS, DEFAULT_SIM_DT,
    DEFAULT_SNAPSHOT_TIMES, DEFAULT_TRAJECTORIES,
};
pub use pde::{
    find_solver, relaxation, snapshot_schedule, solve_crank_nicolson, solve_spectral,
    CrankNicolsonSolver, FieldSolver, PdeSolution, SolveMethod, SolveRequest, SpectralSolver,
    DEFAULT_FD_STEPS, DEFAULT_MOLLIFY_WIDTH, DEFAULT_SNAPSHOTS, SOLVERS,
};
pub use rates::RateField;
