//! The additive right-hand-side split consumed by the time integrators.

use crate::error::StepError;
use crate::state::State;

/// An ordinary differential equation `u' = f(u, t)` split additively into a
/// stiff part handled implicitly and a non-stiff part handled explicitly:
/// `f = implicit_tendency + explicit_tendency`.
///
/// Implementors promise:
/// - [`full_tendency`](SplitRhs::full_tendency) equals the sum of the two
///   parts at every `(state, t)`;
/// - [`implicit_solve`](SplitRhs::implicit_solve) returns `x` with
///   `(I - h * implicit_tendency) x = rhs`, i.e. applying
///   `x - h * implicit_tendency(x, t)` recovers `rhs`;
/// - all methods are pure functions of their arguments, so a single instance
///   may be shared across threads (the trait requires [`Sync`]).
///
/// [`post_step`](SplitRhs::post_step) is a hook applied by the integrators
/// after each completed step; problems with algebraic constraints (such as
/// the discrete divergence-free condition of the cavity flow) enforce them
/// there. The default is a no-op.
pub trait SplitRhs: Sync {
    /// The non-stiff tendency, integrated explicitly.
    fn explicit_tendency(&self, state: &State, t: f64) -> State;

    /// The stiff tendency, integrated implicitly.
    fn implicit_tendency(&self, state: &State, t: f64) -> State;

    /// Solves `(I - h * implicit_tendency) x = rhs` for `x`.
    ///
    /// `t` is the time at which the implicit tendency is taken (the end of
    /// the step for backward Euler).
    fn implicit_solve(&self, rhs: &State, t: f64, h: f64) -> Result<State, StepError>;

    /// The unsplit tendency; defaults to the sum of the two parts.
    fn full_tendency(&self, state: &State, t: f64) -> State {
        let mut f = self.implicit_tendency(state, t);
        f.axpy(1.0, &self.explicit_tendency(state, t));
        f
    }

    /// Constraint enforcement after a completed step ending at time `t`
    /// with step size `h`. No-op by default.
    fn post_step(&self, state: &mut State, t: f64, h: f64) -> Result<(), StepError> {
        let _ = (state, t, h);
        Ok(())
    }
}
