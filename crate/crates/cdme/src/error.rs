use thiserror::Error;

/// Errors produced by the solver and simulation layers.
#[derive(Debug, Error)]
pub enum CdmeError {
    #[error("degradation rate must be strictly positive, got {0}")]
    NonPositiveDegradation(f64),

    #[error("invalid rate field: {0}")]
    InvalidRateField(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("eigenvalue solver failed: {0}")]
    EigenSolverFailure(String),

    #[error("smallest eigenvalue {0} is not strictly positive")]
    AssumptionOneViolated(f64),

    #[error("degradation field is not finitely supported in the stored eigenmodes")]
    AssumptionTwoViolated,

    #[error("tridiagonal linear solve failed at row {0}")]
    LinearSolveFailure(usize),

    #[error("Dirac rate fields must be mollified before grid-based solves")]
    MollificationRequired,

    #[error("need at least {0} stored snapshots for the requested stencil")]
    InsufficientSnapshots(usize),

    #[error("position {0} outside the domain [0, 1]")]
    PositionOutOfDomain(f64),

    #[error("mass m(t) = {0} too small to define a conditional density")]
    DegenerateTime(f64),

    #[error("residual check not implemented for particle number {0}")]
    UnsupportedOrder(usize),

    #[error("identity violated at mode {k}, t = {t}: deviation {deviation:e}")]
    IdentityViolated { k: usize, t: f64, deviation: f64 },

    #[error("snapshot times of the simulation are not covered by the analytic solution")]
    SnapshotMismatch,

    #[error("no eigenbasis attached to this solution")]
    MissingBasis,

    #[error("unknown solver '{0}'")]
    UnknownSolver(String),
}

pub type Result<T> = std::result::Result<T, CdmeError>;
