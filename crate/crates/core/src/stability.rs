//! Linear stability analysis of the coarse, fine, and parareal schemes over
//! the complex plane.
//!
//! The model problem is the scalar linear equation `y' = (re + i*im) y` with
//! `y(0) = 1`: the real part is the stiff ("diffusion") tendency handled
//! implicitly by the coarse method, the imaginary part the non-stiff
//! ("convection") tendency handled explicitly. Sweeping a window of complex
//! coefficients and recording a growth rate per sample traces out each
//! scheme's stability domain; comparing against the exact exponential gives
//! accuracy error levels.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Serialize, Serializer};
use std::fmt;

use crate::error::StepError;
use crate::integrators::{propagate, Method, PropagatorSpec};
use crate::parareal::{parareal_solve, PararealError, SliceDecomposition};
use crate::rhs::SplitRhs;
use crate::state::State;

/// Magnitudes above this are treated as overflow: the trajectory is
/// truncated and flagged unstable so that NaN cannot contaminate a sweep.
pub const OVERFLOW_THRESHOLD: f64 = 1e100;

/// Packs a complex scalar into a two-entry state `[re, im]`.
pub fn complex_to_state(z: Complex64) -> State {
    State::new(vec![z.re, z.im])
}

/// Reads a complex scalar back out of a two-entry state.
pub fn state_to_complex(s: &State) -> Complex64 {
    Complex64::new(s[0], s[1])
}

/// The scalar linear test problem `y' = lambda * y` split for IMEX
/// integration: the real part of `lambda` is the implicit tendency, the
/// imaginary part the explicit one. The state is the complex scalar stored
/// as two reals.
#[derive(Clone, Copy, Debug)]
pub struct DahlquistRhs {
    pub lambda: Complex64,
}

impl SplitRhs for DahlquistRhs {
    fn explicit_tendency(&self, state: &State, _t: f64) -> State {
        // i * im * (yr + i yi) = -im*yi + i*(im*yr)
        let im = self.lambda.im;
        State::new(vec![-im * state[1], im * state[0]])
    }

    fn implicit_tendency(&self, state: &State, _t: f64) -> State {
        let re = self.lambda.re;
        State::new(vec![re * state[0], re * state[1]])
    }

    fn implicit_solve(&self, rhs: &State, _t: f64, h: f64) -> Result<State, StepError> {
        let pivot = 1.0 - h * self.lambda.re;
        if pivot == 0.0 {
            return Err(StepError::Singular { pivot });
        }
        Ok(State::new(vec![rhs[0] / pivot, rhs[1] / pivot]))
    }
}

/// Builds the split right-hand side for `y' = lambda * y`.
pub fn dahlquist_rhs(lambda: Complex64) -> DahlquistRhs {
    DahlquistRhs { lambda }
}

/// A scheme whose stability is being mapped: the serial coarse method, the
/// serial fine method, or parareal truncated at a fixed number of
/// corrective iterations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Scheme {
    CoarseSerial,
    FineSerial,
    /// Parareal after the given number of corrective iterations
    /// (0 = the serial coarse prediction).
    Parareal(usize),
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::CoarseSerial => write!(f, "coarse-serial"),
            Scheme::FineSerial => write!(f, "fine-serial"),
            Scheme::Parareal(k) => write!(f, "parareal@{k}"),
        }
    }
}

impl Serialize for Scheme {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Slice-boundary values of one scheme at one point of the complex plane.
///
/// `values` holds `U_0..U_m`; when a magnitude exceeded
/// [`OVERFLOW_THRESHOLD`] (or stopped being finite) the trajectory is
/// truncated there and `overflowed` is set.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub values: Vec<Complex64>,
    pub overflowed: bool,
}

impl Trajectory {
    fn from_complex_sequence(raw: impl IntoIterator<Item = Complex64>) -> Self {
        let mut values = Vec::new();
        let mut overflowed = false;
        for z in raw {
            if !z.re.is_finite() || !z.im.is_finite() || z.norm() > OVERFLOW_THRESHOLD {
                overflowed = true;
                break;
            }
            values.push(z);
        }
        Trajectory { values, overflowed }
    }
}

fn serial_trajectory(
    method: Method,
    step_size: f64,
    steps_per_slice: usize,
    lambda: Complex64,
    decomp: &SliceDecomposition,
) -> Result<Trajectory, PararealError> {
    let rhs = dahlquist_rhs(lambda);
    let spec = PropagatorSpec::new(method, step_size, &rhs);
    let mut values = vec![Complex64::new(1.0, 0.0)];
    for i in 0..decomp.n_slices {
        let state = complex_to_state(values[i]);
        let next = propagate(
            &spec,
            &state,
            decomp.boundary_time(i),
            decomp.boundary_time(i + 1),
            steps_per_slice,
        )
        .map_err(|e| PararealError::ReferenceStepFailed {
            slice: i + 1,
            source: e,
        })?;
        let z = state_to_complex(&next);
        if !next.is_finite() || z.norm() > OVERFLOW_THRESHOLD {
            return Ok(Trajectory {
                values,
                overflowed: true,
            });
        }
        values.push(z);
    }
    Ok(Trajectory {
        values,
        overflowed: false,
    })
}

/// Computes the slice-boundary trajectory of one scheme at one complex
/// coefficient, starting from `y(0) = 1`.
///
/// Overflow is not an error: the trajectory comes back truncated and
/// flagged, and [`amplification_factor`] classifies it as unstable.
pub fn run_scheme(
    scheme: Scheme,
    lambda: Complex64,
    decomp: &SliceDecomposition,
) -> Result<Trajectory, PararealError> {
    match scheme {
        Scheme::CoarseSerial => serial_trajectory(
            Method::ImexEuler,
            decomp.coarse_dt(),
            decomp.coarse_steps_per_slice,
            lambda,
            decomp,
        ),
        Scheme::FineSerial => serial_trajectory(
            Method::Rk3Explicit,
            decomp.fine_dt(),
            decomp.fine_steps_per_slice,
            lambda,
            decomp,
        ),
        Scheme::Parareal(k) => {
            let rhs = dahlquist_rhs(lambda);
            let fine = PropagatorSpec::new(Method::Rk3Explicit, decomp.fine_dt(), &rhs);
            let coarse = PropagatorSpec::new(Method::ImexEuler, decomp.coarse_dt(), &rhs);
            let u0 = complex_to_state(Complex64::new(1.0, 0.0));
            match parareal_solve(&fine, &coarse, decomp, &u0, k, None) {
                Ok(run) => {
                    let final_iterate = run.iterates.last().expect("at least the prediction");
                    Ok(Trajectory::from_complex_sequence(
                        final_iterate.iter().map(state_to_complex),
                    ))
                }
                // A divergence inside the iteration is overflow by another
                // name: classify the point as unstable.
                Err(PararealError::Diverged { .. }) => Ok(Trajectory {
                    values: vec![Complex64::new(1.0, 0.0)],
                    overflowed: true,
                }),
                Err(other) => Err(other),
            }
        }
    }
}

/// The growth rate `max over n >= 1 of |U_n|^(1/n)` of a slice-boundary
/// trajectory starting at `U_0 = 1`; a scheme is classified stable at a
/// point iff this value is at most 1. Overflowed trajectories map to
/// positive infinity.
pub fn amplification_factor(trajectory: &Trajectory) -> f64 {
    if trajectory.overflowed {
        return f64::INFINITY;
    }
    trajectory
        .values
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, z)| z.norm().powf(1.0 / n as f64))
        .fold(0.0_f64, f64::max)
}

/// Max over `n >= 1` of the absolute deviation `|U_n - exp(lambda * t_n)|`
/// from the exact solution. Overflowed trajectories map to positive
/// infinity.
pub fn accuracy_error(
    trajectory: &Trajectory,
    lambda: Complex64,
    decomp: &SliceDecomposition,
) -> f64 {
    if trajectory.overflowed {
        return f64::INFINITY;
    }
    trajectory
        .values
        .iter()
        .enumerate()
        .skip(1)
        .map(|(n, z)| (z - (lambda * decomp.boundary_time(n)).exp()).norm())
        .fold(0.0_f64, f64::max)
}

/// Amplification and accuracy values for a set of schemes over a
/// rectangular window of complex coefficients.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityGrid {
    pub schemes: Vec<Scheme>,
    pub re_samples: Vec<f64>,
    pub im_samples: Vec<f64>,
    /// Flattened as `[scheme][re][im]`.
    pub amplification: Vec<f64>,
    /// Flattened as `[scheme][re][im]`.
    pub accuracy_error: Vec<f64>,
}

impl StabilityGrid {
    fn flat_index(&self, scheme_idx: usize, re_idx: usize, im_idx: usize) -> usize {
        (scheme_idx * self.re_samples.len() + re_idx) * self.im_samples.len() + im_idx
    }

    pub fn scheme_index(&self, scheme: Scheme) -> Option<usize> {
        self.schemes.iter().position(|&s| s == scheme)
    }

    /// `(amplification, accuracy_error)` at one sample of one layer.
    pub fn value(&self, scheme_idx: usize, re_idx: usize, im_idx: usize) -> (f64, f64) {
        let i = self.flat_index(scheme_idx, re_idx, im_idx);
        (self.amplification[i], self.accuracy_error[i])
    }

    /// Number of samples of a layer with amplification at most 1.
    pub fn stable_count(&self, scheme: Scheme) -> Option<usize> {
        let s = self.scheme_index(scheme)?;
        let len = self.re_samples.len() * self.im_samples.len();
        let start = s * len;
        Some(
            self.amplification[start..start + len]
                .iter()
                .filter(|&&a| a <= 1.0)
                .count(),
        )
    }

    fn append_layer_csv(&self, scheme_idx: usize, out: &mut String) {
        use fmt::Write;
        let scheme = self.schemes[scheme_idx];
        for (i, re) in self.re_samples.iter().enumerate() {
            for (j, im) in self.im_samples.iter().enumerate() {
                let (amp, acc) = self.value(scheme_idx, i, j);
                writeln!(out, "{scheme},{re},{im},{amp:.16e},{acc:.16e}")
                    .expect("writing to a string cannot fail");
            }
        }
    }

    /// CSV with columns `scheme,re,im,amplification,accuracy_error` covering
    /// every layer.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scheme,re,im,amplification,accuracy_error\n");
        for s in 0..self.schemes.len() {
            self.append_layer_csv(s, &mut out);
        }
        out
    }

    /// CSV for a single scheme layer (same columns as [`to_csv`]).
    pub fn layer_to_csv(&self, scheme: Scheme) -> Option<String> {
        let s = self.scheme_index(scheme)?;
        let mut out = String::from("scheme,re,im,amplification,accuracy_error\n");
        self.append_layer_csv(s, &mut out);
        Some(out)
    }

    /// JSON document with the same fields as the struct. Non-finite values
    /// (overflow sentinels) serialize as `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("grid serialization cannot fail")
    }
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    (0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect()
}

/// Sweeps the window `re_range x im_range` at `resolution` samples per axis,
/// filling one layer per scheme: the serial coarse method, the serial fine
/// method, and parareal at each requested corrective-iteration count.
///
/// Grid points are independent and processed in parallel; per-point results
/// are deterministic and written by index, so the output does not depend on
/// the execution schedule.
pub fn sweep(
    re_range: (f64, f64),
    im_range: (f64, f64),
    resolution: usize,
    iter_counts: &[usize],
    decomp: &SliceDecomposition,
) -> Result<StabilityGrid, PararealError> {
    if resolution < 2 {
        return Err(PararealError::InvalidConfig(format!(
            "sweep resolution must be at least 2 (got {resolution})"
        )));
    }
    if re_range.1 < re_range.0 || im_range.1 < im_range.0 {
        return Err(PararealError::InvalidConfig(
            "sweep ranges must be ascending".into(),
        ));
    }
    if ![re_range.0, re_range.1, im_range.0, im_range.1]
        .iter()
        .all(|x| x.is_finite())
    {
        return Err(PararealError::InvalidConfig(
            "sweep ranges must be finite".into(),
        ));
    }
    for &k in iter_counts {
        if k > decomp.n_slices {
            return Err(PararealError::InvalidConfig(format!(
                "iteration count {k} exceeds the slice count {}",
                decomp.n_slices
            )));
        }
    }

    let mut schemes = vec![Scheme::CoarseSerial, Scheme::FineSerial];
    schemes.extend(iter_counts.iter().map(|&k| Scheme::Parareal(k)));
    let re_samples = linspace(re_range.0, re_range.1, resolution);
    let im_samples = linspace(im_range.0, im_range.1, resolution);

    // One result row per (re, im) point holding every layer's pair, computed
    // in parallel over points and reassembled by index afterwards. All
    // parareal layers at one point share a single run truncated at the
    // largest requested iteration count: the iteration never looks ahead, so
    // iterate k of that run is bitwise the iterate of a run stopped at k.
    let points: Vec<(usize, usize)> = (0..resolution)
        .flat_map(|i| (0..resolution).map(move |j| (i, j)))
        .collect();
    let per_point: Vec<Result<Vec<(f64, f64)>, PararealError>> = points
        .par_iter()
        .map(|&(i, j)| {
            let lambda = Complex64::new(re_samples[i], im_samples[j]);
            let mut layers = Vec::with_capacity(schemes.len());
            for &scheme in &schemes[..2] {
                let traj = run_scheme(scheme, lambda, decomp)?;
                layers.push((
                    amplification_factor(&traj),
                    accuracy_error(&traj, lambda, decomp),
                ));
            }
            layers.extend(parareal_layers(lambda, iter_counts, decomp)?);
            Ok(layers)
        })
        .collect();

    let layer_len = resolution * resolution;
    let mut amplification = vec![0.0; schemes.len() * layer_len];
    let mut accuracy = vec![0.0; schemes.len() * layer_len];
    for (point_idx, result) in per_point.into_iter().enumerate() {
        let layers = result?;
        let (i, j) = points[point_idx];
        for (s, (amp, acc)) in layers.into_iter().enumerate() {
            let flat = (s * resolution + i) * resolution + j;
            amplification[flat] = amp;
            accuracy[flat] = acc;
        }
    }

    Ok(StabilityGrid {
        schemes,
        re_samples,
        im_samples,
        amplification,
        accuracy_error: accuracy,
    })
}

/// `(amplification, accuracy)` for every requested parareal iteration count
/// at one point, sharing one truncated run across counts.
fn parareal_layers(
    lambda: Complex64,
    iter_counts: &[usize],
    decomp: &SliceDecomposition,
) -> Result<Vec<(f64, f64)>, PararealError> {
    let mut out = vec![(f64::INFINITY, f64::INFINITY); iter_counts.len()];
    // Counts still awaiting values, retried with a smaller truncation point
    // whenever the shared run diverges first.
    let mut pending: Vec<(usize, usize)> = iter_counts.iter().copied().enumerate().collect();
    let rhs = dahlquist_rhs(lambda);
    let fine = PropagatorSpec::new(Method::Rk3Explicit, decomp.fine_dt(), &rhs);
    let coarse = PropagatorSpec::new(Method::ImexEuler, decomp.coarse_dt(), &rhs);
    let u0 = complex_to_state(Complex64::new(1.0, 0.0));
    while !pending.is_empty() {
        let k_max = pending.iter().map(|&(_, k)| k).max().unwrap();
        match parareal_solve(&fine, &coarse, decomp, &u0, k_max, None) {
            Ok(run) => {
                for &(slot, k) in &pending {
                    let traj = Trajectory::from_complex_sequence(
                        run.iterates[k].iter().map(state_to_complex),
                    );
                    out[slot] = (
                        amplification_factor(&traj),
                        accuracy_error(&traj, lambda, decomp),
                    );
                }
                pending.clear();
            }
            Err(PararealError::Diverged { iteration, .. }) => {
                // Layers at or past the divergent iteration are unstable by
                // definition; earlier ones get a shorter rerun.
                pending.retain(|&(_, k)| k < iteration);
            }
            Err(other) => return Err(other),
        }
    }
    Ok(out)
}
