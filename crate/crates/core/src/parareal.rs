//! The parareal iteration over a coarse/fine propagator pair.
//!
//! The time horizon `[0, T]` is cut into `N` slices. Iteration `k = 0` is a
//! serial sweep of the cheap coarse propagator `G`; every subsequent
//! iteration combines, per slice boundary, a parallel application of the
//! expensive fine propagator `F` to the previous iterate with a serial
//! coarse correction:
//!
//! ```text
//! U[k+1][n+1] = G(U[k+1][n]) + F(U[k][n]) - G(U[k][n])
//! ```
//!
//! After `k` iterations the first `k` slice boundaries agree with the serial
//! fine solution exactly, so `max_iter = N` reproduces serial fine
//! time-marching (at no parallel speedup).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::StepError;
use crate::integrators::{propagate, PropagatorSpec};
use crate::state::State;

/// States smaller than this run the fine sweep sequentially: spawning tasks
/// for a two-entry state costs far more than the propagation itself. The
/// per-slice arithmetic is identical either way, so results do not depend on
/// the choice.
const PARALLEL_DOF_CUTOFF: usize = 64;

/// Uniform decomposition of `[0, t_end]` into `n_slices` slices, with fixed
/// coarse and fine step counts inside each slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceDecomposition {
    pub t_end: f64,
    pub n_slices: usize,
    pub coarse_steps_per_slice: usize,
    pub fine_steps_per_slice: usize,
}

impl SliceDecomposition {
    pub fn new(
        t_end: f64,
        n_slices: usize,
        coarse_steps_per_slice: usize,
        fine_steps_per_slice: usize,
    ) -> Result<Self, PararealError> {
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(PararealError::InvalidConfig(format!(
                "horizon length must be positive and finite (got {t_end})"
            )));
        }
        if n_slices == 0 || coarse_steps_per_slice == 0 || fine_steps_per_slice == 0 {
            return Err(PararealError::InvalidConfig(
                "slice and step counts must be positive".into(),
            ));
        }
        Ok(SliceDecomposition {
            t_end,
            n_slices,
            coarse_steps_per_slice,
            fine_steps_per_slice,
        })
    }

    /// Length of one slice, `t_end / n_slices`.
    pub fn slice_length(&self) -> f64 {
        self.t_end / self.n_slices as f64
    }

    /// Coarse step size inside a slice.
    pub fn coarse_dt(&self) -> f64 {
        self.slice_length() / self.coarse_steps_per_slice as f64
    }

    /// Fine step size inside a slice.
    pub fn fine_dt(&self) -> f64 {
        self.slice_length() / self.fine_steps_per_slice as f64
    }

    /// The `i`-th slice boundary time, `t_end * i / n_slices`.
    pub fn boundary_time(&self, i: usize) -> f64 {
        self.t_end * i as f64 / self.n_slices as f64
    }
}

/// Knobs for [`parareal_solve_with`].
#[derive(Clone, Copy, Debug)]
pub struct PararealOptions {
    /// Number of corrective iterations to run (at most `n_slices`).
    pub max_iter: usize,
    /// When set, stop as soon as the recorded error drops to this value or
    /// below. Off by default: convergence curves want every iteration.
    pub early_exit_tol: Option<f64>,
    /// Number of leading degrees of freedom entering the error norm
    /// (`None` = all). The cavity flow restricts the norm to velocities.
    pub error_dofs: Option<usize>,
}

impl PararealOptions {
    pub fn new(max_iter: usize) -> Self {
        PararealOptions {
            max_iter,
            early_exit_tol: None,
            error_dofs: None,
        }
    }
}

/// The result of a parareal run: every iterate, and per-iteration errors
/// against a reference when one was supplied.
#[derive(Clone, Debug)]
pub struct PararealRun {
    /// `iterates[k][n]` is the state at slice boundary `n` after iteration
    /// `k`; `k = 0` is the serial coarse prediction. `iterates[k][0]` is the
    /// initial condition, bitwise, for every `k`.
    pub iterates: Vec<Vec<State>>,
    /// Error of iterate `k` against the reference, for `k = 1..=k_performed`
    /// (one entry per corrective iteration). Empty when no reference was
    /// supplied.
    pub errors: Vec<f64>,
    /// Number of corrective iterations actually performed.
    pub k_performed: usize,
}

/// Failures of the parareal driver and its error metric.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum PararealError {
    #[error("time step failed at iteration {iteration}, slice {slice}: {source}")]
    StepFailed {
        iteration: usize,
        slice: usize,
        #[source]
        source: StepError,
    },

    #[error("iterate diverged (non-finite values) at iteration {iteration}, slice {slice}")]
    Diverged { iteration: usize, slice: usize },

    #[error("serial reference diverged (non-finite values) in slice {slice}")]
    ReferenceDiverged { slice: usize },

    #[error("serial reference step failed in slice {slice}: {source}")]
    ReferenceStepFailed {
        slice: usize,
        #[source]
        source: StepError,
    },

    #[error("reference state at position {index} has zero max-norm; relative error undefined")]
    ZeroReferenceNorm { index: usize },

    #[error("invalid parareal configuration: {0}")]
    InvalidConfig(String),
}

fn check_propagator_consistency(
    label: &str,
    step_size: f64,
    steps_per_slice: usize,
    slice_length: f64,
) -> Result<(), PararealError> {
    let covered = step_size * steps_per_slice as f64;
    if (covered - slice_length).abs() > 1e-12 * slice_length {
        return Err(PararealError::InvalidConfig(format!(
            "{label} propagator covers {covered} per slice, expected {slice_length}"
        )));
    }
    Ok(())
}

/// Runs the fine propagator serially across all slices, returning the slice
/// boundary states `U[0..=N]`. This is classical time-marching and serves as
/// the reference solution for convergence measurements.
pub fn serial_reference(
    fine: &PropagatorSpec,
    decomp: &SliceDecomposition,
    u0: &State,
) -> Result<Vec<State>, PararealError> {
    check_propagator_consistency(
        "fine",
        fine.step_size,
        decomp.fine_steps_per_slice,
        decomp.slice_length(),
    )?;
    let mut states = Vec::with_capacity(decomp.n_slices + 1);
    states.push(u0.clone());
    for i in 0..decomp.n_slices {
        let next = propagate(
            fine,
            &states[i],
            decomp.boundary_time(i),
            decomp.boundary_time(i + 1),
            decomp.fine_steps_per_slice,
        )
        .map_err(|e| match e {
            StepError::NonFiniteState => PararealError::ReferenceDiverged { slice: i + 1 },
            other => PararealError::ReferenceStepFailed {
                slice: i + 1,
                source: other,
            },
        })?;
        if !next.is_finite() {
            return Err(PararealError::ReferenceDiverged { slice: i + 1 });
        }
        states.push(next);
    }
    Ok(states)
}

/// Max over positions of `|iterate - reference|_inf / |reference|_inf`,
/// the norms taken over all degrees of freedom.
///
/// The sequences must have equal, nonzero length; a reference entry with
/// zero max-norm makes the metric undefined and is reported as an error.
/// Callers comparing slice-boundary trajectories pass the entries for
/// slices `1..=N` (the shared initial condition carries no information).
pub fn relative_error(iterates: &[State], reference: &[State]) -> Result<f64, PararealError> {
    let dofs = reference.first().map_or(0, State::len);
    relative_error_over(iterates, reference, dofs)
}

/// [`relative_error`] restricted to the first `n_dofs` degrees of freedom of
/// every state.
pub fn relative_error_over(
    iterates: &[State],
    reference: &[State],
    n_dofs: usize,
) -> Result<f64, PararealError> {
    if iterates.len() != reference.len() || reference.is_empty() {
        return Err(PararealError::InvalidConfig(format!(
            "error metric needs equally sized nonempty sequences (got {} and {})",
            iterates.len(),
            reference.len()
        )));
    }
    let mut worst = 0.0_f64;
    for (index, (it, re)) in iterates.iter().zip(reference).enumerate() {
        let denom = re.max_norm_over(n_dofs);
        if denom == 0.0 {
            return Err(PararealError::ZeroReferenceNorm { index });
        }
        worst = worst.max(it.max_diff_over(re, n_dofs) / denom);
    }
    Ok(worst)
}

/// The ideal parareal speedup ceiling `min(n_slices / n_iter,
/// cost_fine / cost_coarse)` for `n_slices` slices, `n_iter` iterations and
/// the given per-slice propagator costs.
pub fn speedup_bound(
    n_slices: usize,
    n_iter: usize,
    cost_fine: f64,
    cost_coarse: f64,
) -> Result<f64, PararealError> {
    if n_slices == 0 || n_iter == 0 || !(cost_fine > 0.0) || !(cost_coarse > 0.0) {
        return Err(PararealError::InvalidConfig(
            "speedup bound needs positive slice/iteration counts and costs".into(),
        ));
    }
    Ok((n_slices as f64 / n_iter as f64).min(cost_fine / cost_coarse))
}

/// Runs the parareal iteration with default options (no early exit, error
/// norm over all degrees of freedom). See [`parareal_solve_with`].
pub fn parareal_solve(
    fine: &PropagatorSpec,
    coarse: &PropagatorSpec,
    decomp: &SliceDecomposition,
    u0: &State,
    max_iter: usize,
    reference: Option<&[State]>,
) -> Result<PararealRun, PararealError> {
    parareal_solve_with(
        fine,
        coarse,
        decomp,
        u0,
        &PararealOptions::new(max_iter),
        reference,
    )
}

/// Runs the parareal iteration.
///
/// Iteration 0 is the serial coarse sweep from `u0`. Each corrective
/// iteration propagates every slice with the fine method (in parallel when
/// the state is large enough to pay for it), then performs the serial
/// coarse correction sweep. The per-slice correction is computed as
/// `F + (G_new - G_prev)`, whose coarse difference cancels exactly once an
/// iterate has converged on a slice; this makes the first `k` slice
/// boundaries of iterate `k` bitwise equal to serial fine propagation.
///
/// When `reference` holds the serial fine trajectory (`N + 1` states), the
/// error of each corrective iterate is recorded, and
/// `options.early_exit_tol` may stop the run early. Non-finite values in any
/// iterate abort with [`PararealError::Diverged`].
pub fn parareal_solve_with(
    fine: &PropagatorSpec,
    coarse: &PropagatorSpec,
    decomp: &SliceDecomposition,
    u0: &State,
    options: &PararealOptions,
    reference: Option<&[State]>,
) -> Result<PararealRun, PararealError> {
    let n = decomp.n_slices;
    if options.max_iter > n {
        return Err(PararealError::InvalidConfig(format!(
            "max_iter ({}) exceeds the slice count ({n})",
            options.max_iter
        )));
    }
    check_propagator_consistency(
        "coarse",
        coarse.step_size,
        decomp.coarse_steps_per_slice,
        decomp.slice_length(),
    )?;
    check_propagator_consistency(
        "fine",
        fine.step_size,
        decomp.fine_steps_per_slice,
        decomp.slice_length(),
    )?;
    if let Some(r) = reference {
        if r.len() != n + 1 {
            return Err(PararealError::InvalidConfig(format!(
                "reference has {} states, expected {}",
                r.len(),
                n + 1
            )));
        }
    }
    let error_dofs = options.error_dofs.unwrap_or_else(|| u0.len());

    let run_coarse = |state: &State, slice: usize, iteration: usize| {
        propagate(
            coarse,
            state,
            decomp.boundary_time(slice),
            decomp.boundary_time(slice + 1),
            decomp.coarse_steps_per_slice,
        )
        .map_err(|e| match e {
            StepError::NonFiniteState => PararealError::Diverged {
                iteration,
                slice: slice + 1,
            },
            other => PararealError::StepFailed {
                iteration,
                slice: slice + 1,
                source: other,
            },
        })
    };

    // Iteration 0: serial coarse prediction. The coarse values are kept for
    // the first correction sweep.
    let mut current = Vec::with_capacity(n + 1);
    current.push(u0.clone());
    let mut coarse_prev = Vec::with_capacity(n);
    for i in 0..n {
        let g = run_coarse(&current[i], i, 0)?;
        if !g.is_finite() {
            return Err(PararealError::Diverged {
                iteration: 0,
                slice: i + 1,
            });
        }
        coarse_prev.push(g.clone());
        current.push(g);
    }

    let mut iterates = vec![current];
    let mut errors = Vec::new();
    let mut k_performed = 0;

    for k in 1..=options.max_iter {
        let previous = &iterates[k - 1];

        // Independent fine propagations of the previous iterate, one per
        // slice. Results are collected by slice index, so the outcome does
        // not depend on the execution schedule.
        let propagate_fine = |i: usize| {
            propagate(
                fine,
                &previous[i],
                decomp.boundary_time(i),
                decomp.boundary_time(i + 1),
                decomp.fine_steps_per_slice,
            )
        };
        let fine_results: Vec<Result<State, StepError>> = if u0.len() >= PARALLEL_DOF_CUTOFF {
            (0..n).into_par_iter().map(propagate_fine).collect()
        } else {
            (0..n).map(propagate_fine).collect()
        };
        let mut fine_values = Vec::with_capacity(n);
        for (i, result) in fine_results.into_iter().enumerate() {
            match result {
                Ok(state) => fine_values.push(state),
                Err(StepError::NonFiniteState) => {
                    return Err(PararealError::Diverged {
                        iteration: k,
                        slice: i + 1,
                    })
                }
                Err(other) => {
                    return Err(PararealError::StepFailed {
                        iteration: k,
                        slice: i + 1,
                        source: other,
                    })
                }
            }
        }

        // Serial corrective sweep.
        let mut next = Vec::with_capacity(n + 1);
        next.push(u0.clone());
        let mut coarse_new = Vec::with_capacity(n);
        for i in 0..n {
            let g_new = run_coarse(&next[i], i, k)?;
            // F + (G_new - G_prev): grouping the coarse difference first
            // makes it an exact zero wherever the iterate has converged.
            let mut delta = g_new.clone();
            delta.axpy(-1.0, &coarse_prev[i]);
            let mut corrected = fine_values[i].clone();
            corrected.axpy(1.0, &delta);
            if !corrected.is_finite() {
                return Err(PararealError::Diverged {
                    iteration: k,
                    slice: i + 1,
                });
            }
            coarse_new.push(g_new);
            next.push(corrected);
        }
        coarse_prev = coarse_new;

        if let Some(r) = reference {
            let e =
                relative_error_over(&next[1..], &r[1..], error_dofs).map_err(|err| match err {
                    PararealError::ZeroReferenceNorm { index } => {
                        PararealError::ZeroReferenceNorm { index: index + 1 }
                    }
                    other => other,
                })?;
            errors.push(e);
        }
        iterates.push(next);
        k_performed = k;

        if let (Some(tol), Some(&latest)) = (options.early_exit_tol, errors.last()) {
            if latest <= tol {
                break;
            }
        }
    }

    Ok(PararealRun {
        iterates,
        errors,
        k_performed,
    })
}
