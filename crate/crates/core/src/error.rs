//! Error types shared across the crate.

use thiserror::Error;

/// Failures of a single time step (implicit solves, the pressure solve,
/// interval bookkeeping, non-finite states).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    /// An iterative implicit solve ran out of iterations.
    #[error(
        "implicit solve did not converge: relative residual {residual:.3e} after {iterations} iterations"
    )]
    ImplicitSolveFailed { residual: f64, iterations: usize },

    /// The implicit system has a zero pivot and cannot be inverted.
    #[error("singular implicit system (pivot {pivot:.3e})")]
    Singular { pivot: f64 },

    /// The pressure solve left a residual above the configured tolerance.
    #[error("pressure solve residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    PoissonResidual { residual: f64, tol: f64 },

    /// A state contained NaN or infinite entries before a step could run.
    #[error("state contains non-finite values")]
    NonFiniteState,

    /// `n_steps * step_size` does not match the requested interval.
    #[error(
        "step count times step size ({actual:.17}) does not cover the interval length {expected:.17}"
    )]
    IntervalMismatch { expected: f64, actual: f64 },
}

/// Invalid problem configuration (grid sizes, physical parameters,
/// solver construction).
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("grid resolution must be at least 4 points per axis (got {0})")]
    GridTooSmall(usize),

    #[error("viscosity must be positive and finite (got {0})")]
    BadViscosity(f64),

    #[error("pressure solve tolerance must lie in (0, 1e-6] (got {0})")]
    BadPoissonTol(f64),

    #[error("lid velocity must be finite (got {0})")]
    BadLidVelocity(f64),

    #[error("pressure operator factorization failed at row {row} (pivot {pivot:.3e})")]
    PoissonFactorization { row: usize, pivot: f64 },
}
