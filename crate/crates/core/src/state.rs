//! Flat state vectors of real degrees of freedom.
//!
//! Every problem in this crate (a complex scalar, a discretized flow field)
//! is carried through the integrators and the parareal iteration as a
//! [`State`]: a plain vector of `f64` with a handful of BLAS-1 style
//! helpers. Keeping the representation flat makes states trivially cheap to
//! clone, send across threads, and compare.

use std::ops::{Index, IndexMut};

/// A flat vector of real degrees of freedom.
#[derive(Clone, Debug, PartialEq)]
pub struct State(Vec<f64>);

impl State {
    /// Wraps an existing vector of degrees of freedom.
    pub fn new(values: Vec<f64>) -> Self {
        State(values)
    }

    /// A state of `len` zeros.
    pub fn zeros(len: usize) -> Self {
        State(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// True when every entry is finite (no NaN, no infinities).
    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    /// Max-norm over all degrees of freedom.
    pub fn max_norm(&self) -> f64 {
        self.max_norm_over(self.0.len())
    }

    /// Max-norm over the first `n_dofs` degrees of freedom.
    pub fn max_norm_over(&self, n_dofs: usize) -> f64 {
        self.0[..n_dofs]
            .iter()
            .fold(0.0_f64, |acc, x| acc.max(x.abs()))
    }

    /// Max-norm of `self - other` over the first `n_dofs` degrees of freedom.
    pub fn max_diff_over(&self, other: &State, n_dofs: usize) -> f64 {
        self.0[..n_dofs]
            .iter()
            .zip(&other.0[..n_dofs])
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()))
    }

    /// `self += a * x` (same length required).
    pub fn axpy(&mut self, a: f64, x: &State) {
        debug_assert_eq!(self.len(), x.len());
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += a * v;
        }
    }

    /// `self *= a`.
    pub fn scale(&mut self, a: f64) {
        for s in &mut self.0 {
            *s *= a;
        }
    }

    /// `a*x + b*y`.
    pub fn linear_2(a: f64, x: &State, b: f64, y: &State) -> State {
        debug_assert_eq!(x.len(), y.len());
        State(
            x.0.iter()
                .zip(&y.0)
                .map(|(xi, yi)| a * xi + b * yi)
                .collect(),
        )
    }

    /// `a*x + b*y + c*z`.
    pub fn linear_3(a: f64, x: &State, b: f64, y: &State, c: f64, z: &State) -> State {
        debug_assert_eq!(x.len(), y.len());
        debug_assert_eq!(x.len(), z.len());
        State(
            x.0.iter()
                .zip(&y.0)
                .zip(&z.0)
                .map(|((xi, yi), zi)| a * xi + b * yi + c * zi)
                .collect(),
        )
    }
}

impl Index<usize> for State {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for State {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<Vec<f64>> for State {
    fn from(values: Vec<f64>) -> Self {
        State(values)
    }
}
