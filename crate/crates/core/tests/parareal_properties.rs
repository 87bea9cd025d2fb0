//! Behavioral properties of the parareal driver on a linear system large
//! enough to engage the parallel fine-propagation path.

use ptlab_core::{
    parareal_solve, parareal_solve_with, relative_error, serial_reference, Method, PararealError,
    PararealOptions, PropagatorSpec, SliceDecomposition, SplitRhs, State, StepError,
};

/// A ring of damped, advectively coupled cells: implicit part is per-cell
/// decay, explicit part couples each cell to its ring neighbor. Linear,
/// stable, and wide enough (96 cells) that parareal runs its fine sweeps
/// through the thread pool.
struct DampedRing {
    decay: Vec<f64>,
    coupling: f64,
}

impl DampedRing {
    fn new(len: usize) -> Self {
        DampedRing {
            decay: (0..len)
                .map(|i| 0.3 + 0.7 * (i as f64 / len as f64))
                .collect(),
            coupling: 0.4,
        }
    }

    fn initial(&self) -> State {
        State::new(
            (0..self.decay.len())
                .map(|i| (i as f64 * 0.7).sin() + 1.5)
                .collect(),
        )
    }
}

impl SplitRhs for DampedRing {
    fn explicit_tendency(&self, state: &State, _t: f64) -> State {
        let s = state.as_slice();
        let n = s.len();
        State::new(
            (0..n)
                .map(|i| self.coupling * (s[(i + 1) % n] - s[i]))
                .collect(),
        )
    }

    fn implicit_tendency(&self, state: &State, _t: f64) -> State {
        let s = state.as_slice();
        State::new(s.iter().zip(&self.decay).map(|(x, d)| -d * x).collect())
    }

    fn implicit_solve(&self, rhs: &State, _t: f64, h: f64) -> Result<State, StepError> {
        let s = rhs.as_slice();
        Ok(State::new(
            s.iter()
                .zip(&self.decay)
                .map(|(x, d)| x / (1.0 + h * d))
                .collect(),
        ))
    }
}

fn run_once(threads: usize) -> ptlab_core::PararealRun {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .expect("thread pool");
    pool.install(|| {
        let rhs = DampedRing::new(96);
        let decomp = SliceDecomposition::new(4.0, 8, 4, 16).unwrap();
        let fine = PropagatorSpec::new(Method::Rk3Explicit, decomp.fine_dt(), &rhs);
        let coarse = PropagatorSpec::new(Method::ImexEuler, decomp.coarse_dt(), &rhs);
        let u0 = rhs.initial();
        let reference = serial_reference(&fine, &decomp, &u0).unwrap();
        parareal_solve(&fine, &coarse, &decomp, &u0, 8, Some(&reference)).unwrap()
    })
}

#[test]
fn iterates_are_bitwise_identical_across_thread_counts() {
    let single = run_once(1);
    let multi = run_once(4);
    assert_eq!(single.k_performed, multi.k_performed);
    for (row_a, row_b) in single.iterates.iter().zip(&multi.iterates) {
        for (a, b) in row_a.iter().zip(row_b) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
    for (a, b) in single.errors.iter().zip(&multi.errors) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn repeated_runs_are_deterministic() {
    let first = run_once(2);
    let second = run_once(2);
    for (row_a, row_b) in first.iterates.iter().zip(&second.iterates) {
        for (a, b) in row_a.iter().zip(row_b) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }
}

#[test]
fn full_iteration_count_reaches_the_fine_reference() {
    let run = run_once(2);
    assert_eq!(run.k_performed, 8);
    assert!(
        run.errors[7] <= 1e-11,
        "iterate N error {} above the termination bound",
        run.errors[7]
    );
    // Errors decay monotonically until they hit roundoff.
    for pair in run.errors.windows(2) {
        assert!(pair[1] <= pair[0].max(1e-13));
    }
}

#[test]
fn early_exit_reports_the_iterations_actually_done() {
    let rhs = DampedRing::new(96);
    let decomp = SliceDecomposition::new(4.0, 8, 4, 16).unwrap();
    let fine = PropagatorSpec::new(Method::Rk3Explicit, decomp.fine_dt(), &rhs);
    let coarse = PropagatorSpec::new(Method::ImexEuler, decomp.coarse_dt(), &rhs);
    let u0 = rhs.initial();
    let reference = serial_reference(&fine, &decomp, &u0).unwrap();
    let full = parareal_solve(&fine, &coarse, &decomp, &u0, 8, Some(&reference)).unwrap();
    let tol = full.errors[2] * 1.0001;
    let mut options = PararealOptions::new(8);
    options.early_exit_tol = Some(tol);
    let short =
        parareal_solve_with(&fine, &coarse, &decomp, &u0, &options, Some(&reference)).unwrap();
    assert_eq!(short.k_performed, 3);
    assert_eq!(short.errors.len(), 3);
    // The truncated run's iterates are a bitwise prefix of the full run's.
    for (k, row) in short.iterates.iter().enumerate() {
        for (a, b) in row.iter().zip(&full.iterates[k]) {
            assert_eq!(a.as_slice(), b.as_slice());
        }
    }
}

#[test]
fn zero_reference_states_make_the_error_metric_fail_loudly() {
    let states = vec![State::new(vec![1.0, 2.0]); 3];
    let zeros = vec![State::zeros(2); 3];
    match relative_error(&states, &zeros) {
        Err(PararealError::ZeroReferenceNorm { index: 0 }) => {}
        other => panic!("expected a zero-norm error, got {other:?}"),
    }
}
