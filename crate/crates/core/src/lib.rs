//! Time-parallel integration laboratory.
//!
//! This crate bundles three layers that build on each other:
//!
//! 1. **Integrators** ([`integrators`]): one-step IMEX Euler and explicit
//!    third-order Runge-Kutta methods over an abstract split right-hand
//!    side ([`SplitRhs`]), plus multi-step propagation over an interval.
//! 2. **Parareal** ([`parareal`]): the parallel-in-time iteration that
//!    combines a cheap coarse propagator with an accurate fine propagator,
//!    with convergence measurement against the serial fine reference and
//!    the ideal speedup bound.
//! 3. **Applications**: a complex-plane linear stability analyzer
//!    ([`stability`]) mapping where each scheme keeps the model problem
//!    `y' = lambda y` bounded, and a 2D incompressible lid-driven cavity
//!    solver ([`navier_stokes`]) used to study how parareal convergence
//!    responds to viscosity, resolution and step sizes.
//!
//! States are flat `f64` vectors ([`State`]); problems plug into the
//! integrators by implementing [`SplitRhs`]. Everything is deterministic:
//! reruns of any driver produce bitwise-identical numbers, independent of
//! worker-thread count.

pub mod error;
pub mod integrators;
pub mod navier_stokes;
pub mod parareal;
pub mod rhs;
pub mod stability;
mod state;

pub use error::{ConfigError, StepError};
pub use integrators::{imex_euler_step, propagate, rk3_step, Method, PropagatorSpec};
pub use parareal::{
    parareal_solve, parareal_solve_with, relative_error, relative_error_over, serial_reference,
    speedup_bound, PararealError, PararealOptions, PararealRun, SliceDecomposition,
};
pub use rhs::SplitRhs;
pub use state::State;
