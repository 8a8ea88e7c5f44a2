use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not Hermitian (max asymmetry {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("all spanning elements are numerically zero")]
    EmptyBasis,

    #[error("Choi matrix is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotCompletelyPositive { min_eig: f64 },

    #[error("map is not a valid dynamical map at t = {time}: {reason}")]
    InvalidMap { time: f64, reason: String },

    #[error("invalid signal: {0}")]
    InvalidSignal(String),

    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("integration step-halving discrepancy {discrepancy:.3e} exceeds {tol:.1e}; use a smaller step")]
    IntegrationError { discrepancy: f64, tol: f64 },

    #[error("singular generator at t = {time}: smallest singular value {min_singular:.3e}")]
    SingularGenerator { time: f64, min_singular: f64 },

    #[error(
        "not a generator of a trace-preserving family: trace-annihilation residual {residual:.3e}"
    )]
    NotTraceAnnihilating { residual: f64 },

    #[error("natural matrix is not diagonalizable at t = {time} (eigenvector condition number {condition:.3e})")]
    Defective { time: f64, condition: f64 },

    #[error("not divisible between s = {s} and t = {t}: kernel residual {residual:.3e}")]
    NotDivisible { s: f64, t: f64, residual: f64 },

    #[error("limit projector at t* = {t_star} did not converge within {steps} steps (last difference {last_diff:.3e})")]
    LimitDivergence {
        t_star: f64,
        steps: usize,
        last_diff: f64,
    },

    #[error(
        "limit projector at t* = {t_star} failed validation: {property} residual {residual:.3e}"
    )]
    ProjectorValidation {
        t_star: f64,
        property: &'static str,
        residual: f64,
    },

    #[error("subspace is not spanned by positive operators")]
    NotPositivelyGenerated,

    #[error("inconsistent extension constraints (affine residual {residual:.3e})")]
    InconsistentConstraints { residual: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
