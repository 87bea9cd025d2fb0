//! Direct solver for the pressure-increment system of the discrete
//! projection.
//!
//! The projection uses a one-sided difference pair: velocity corrections
//! take forward differences of the pressure increment, the divergence being
//! annihilated takes backward differences. The increment therefore lives on
//! the "offset" node set `(a, b)` with `a, b` in `1..=n-1`, and the
//! composite operator (divergence of the gradient correction) is the graph
//! Laplacian generated by one x-link `(i,j) - (i+1,j)` and one y-link
//! `(i,j) - (i,j+1)` per interior velocity node `(i,j)`.
//!
//! Two offset nodes are special, both at the moving-wall corners:
//! - `(n-1, n-1)` touches no link at all (its divergence is built purely
//!   from boundary values) and is excluded from the system with a zero
//!   increment;
//! - `(1, n-1)` is the grounding node: its increment is pinned to zero and
//!   its equation dropped, which makes the remaining matrix symmetric
//!   positive definite. Mass conservation then parks the moving-wall source
//!   `+lid/h` of the discrete corner dipole at this node (and `-lid/h` at
//!   the excluded corner), independent of the flow; every other offset node
//!   comes out divergence-free to solver precision.
//!
//! The matrix depends only on the grid size, so it is assembled and
//! Cholesky-factored once (banded storage, bandwidth `n-1`) and reused for
//! every projection.

use crate::error::{ConfigError, StepError};

/// Lower-banded Cholesky factorization `A = L L^T` of a symmetric positive
/// definite matrix with the given bandwidth.
struct BandedCholesky {
    dim: usize,
    band: usize,
    /// `factor[r * (band + 1) + d]` stores `L[r][r - d]` for `d <= band`.
    factor: Vec<f64>,
}

impl BandedCholesky {
    /// Factors a matrix given in the same banded layout
    /// (`a[r * (band+1) + d] = A[r][r-d]`).
    fn factor(dim: usize, band: usize, a: &[f64]) -> Result<Self, ConfigError> {
        let w = band + 1;
        let mut l = vec![0.0; dim * w];
        for r in 0..dim {
            let c_min = r.saturating_sub(band);
            for c in c_min..=r {
                let mut sum = a[r * w + (r - c)];
                let k_min = c_min.max(c.saturating_sub(band));
                for k in k_min..c {
                    sum -= l[r * w + (r - k)] * l[c * w + (c - k)];
                }
                if c < r {
                    l[r * w + (r - c)] = sum / l[c * w];
                } else {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(ConfigError::PoissonFactorization { row: r, pivot: sum });
                    }
                    l[r * w] = sum.sqrt();
                }
            }
        }
        Ok(BandedCholesky {
            dim,
            band,
            factor: l,
        })
    }

    /// Solves `A x = b` by forward/backward substitution.
    fn solve(&self, b: &[f64]) -> Vec<f64> {
        let w = self.band + 1;
        let mut x = vec![0.0; self.dim];
        for r in 0..self.dim {
            let mut sum = b[r];
            for k in r.saturating_sub(self.band)..r {
                sum -= self.factor[r * w + (r - k)] * x[k];
            }
            x[r] = sum / self.factor[r * w];
        }
        for r in (0..self.dim).rev() {
            let mut sum = x[r];
            let k_max = (r + self.band).min(self.dim - 1);
            for k in (r + 1)..=k_max {
                sum -= self.factor[k * w + (k - r)] * x[k];
            }
            x[r] = sum / self.factor[r * w];
        }
        x
    }
}

/// Pressure-increment solver bound to one grid size.
pub(crate) struct ProjectionSolver {
    n: usize,
    /// Offset nodes per axis.
    m: usize,
    /// Offset node id -> reduced system index (`None` for the grounding
    /// node and the isolated corner).
    reduced: Vec<Option<usize>>,
    /// Band storage of the reduced matrix, kept for residual checks.
    matrix: Vec<f64>,
    band: usize,
    chol: BandedCholesky,
}

impl ProjectionSolver {
    /// Offset node id for `(a, b)` with `a, b` in `1..=n-1`.
    #[inline]
    fn pid(&self, a: usize, b: usize) -> usize {
        (b - 1) * self.m + (a - 1)
    }

    pub(crate) fn new(n: usize) -> Result<Self, ConfigError> {
        assert!(n >= 4, "projection needs at least a 4x4 grid");
        let m = n - 1;
        let total = m * m;
        let ground = (n - 2) * m; // offset node (1, n-1)
        let corner = total - 1; // offset node (n-1, n-1), isolated
        let mut reduced = vec![None; total];
        let mut next = 0;
        for pid in 0..total {
            if pid != ground && pid != corner {
                reduced[pid] = Some(next);
                next += 1;
            }
        }
        let dim = next;
        let band = m;
        let w = band + 1;
        let mut matrix = vec![0.0; dim * w];
        let mut solver = ProjectionSolver {
            n,
            m,
            reduced,
            matrix: Vec::new(),
            band,
            chol: BandedCholesky {
                dim: 0,
                band: 0,
                factor: Vec::new(),
            },
        };
        // One x-link and one y-link per interior velocity node.
        for j in 1..=n - 2 {
            for i in 1..=n - 2 {
                let here = solver.pid(i, j);
                add_link(
                    &mut matrix,
                    w,
                    solver.reduced[here],
                    solver.reduced[solver.pid(i + 1, j)],
                );
                add_link(
                    &mut matrix,
                    w,
                    solver.reduced[here],
                    solver.reduced[solver.pid(i, j + 1)],
                );
            }
        }
        solver.chol = BandedCholesky::factor(dim, band, &matrix)?;
        solver.matrix = matrix;
        Ok(solver)
    }

    fn apply_matrix(&self, x: &[f64], y: &mut [f64]) {
        let w = self.band + 1;
        let dim = self.chol.dim;
        y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..dim {
            y[r] += self.matrix[r * w] * x[r];
            let k_min = r.saturating_sub(self.band);
            for k in k_min..r {
                let a = self.matrix[r * w + (r - k)];
                if a != 0.0 {
                    y[r] += a * x[k];
                    y[k] += a * x[r];
                }
            }
        }
    }

    /// Projects the provisional velocity onto the discretely
    /// divergence-free space and accumulates the increment into `p`.
    ///
    /// Solves for the increment, checks the solve residual against `tol`,
    /// removes the mean over the connected component (the zero-mean gauge),
    /// corrects interior velocities and adds the increment to the pressure.
    pub(crate) fn project(
        &self,
        u: &mut [f64],
        v: &mut [f64],
        p: &mut [f64],
        dt: f64,
        tol: f64,
    ) -> Result<(), StepError> {
        let n = self.n;
        let m = self.m;
        let h = 1.0 / (n as f64 - 1.0);
        let dim = self.chol.dim;
        let idx = |i: usize, j: usize| j * n + i;

        // Right-hand side: -(h^2/dt) times the backward-difference
        // divergence at each solved offset node.
        let mut rhs = vec![0.0; dim];
        let scale = -(h * h) / dt;
        for b in 1..=m {
            for a in 1..=m {
                if let Some(r) = self.reduced[self.pid(a, b)] {
                    let div =
                        (u[idx(a, b)] - u[idx(a - 1, b)] + v[idx(a, b)] - v[idx(a, b - 1)]) / h;
                    rhs[r] = scale * div;
                }
            }
        }

        let phi = self.chol.solve(&rhs);

        // Residual check: the factorization is exact up to roundoff, so a
        // residual above the configured tolerance signals a broken system.
        let mut residual = vec![0.0; dim];
        self.apply_matrix(&phi, &mut residual);
        let mut res_norm = 0.0_f64;
        let mut rhs_norm = 0.0_f64;
        for r in 0..dim {
            res_norm = res_norm.max((residual[r] - rhs[r]).abs());
            rhs_norm = rhs_norm.max(rhs[r].abs());
        }
        if res_norm > tol * rhs_norm.max(1.0) {
            return Err(StepError::PoissonResidual {
                residual: res_norm / rhs_norm.max(1.0),
                tol,
            });
        }

        // Scatter to the full offset set (ground and corner at zero), then
        // shift the connected component to zero mean. The corner is its own
        // component and keeps increment zero.
        let total = m * m;
        let corner = total - 1;
        let mut phi_full = vec![0.0; total];
        for pid in 0..total {
            if let Some(r) = self.reduced[pid] {
                phi_full[pid] = phi[r];
            }
        }
        let component = (total - 1) as f64;
        let mean: f64 = phi_full
            .iter()
            .enumerate()
            .filter(|&(pid, _)| pid != corner)
            .map(|(_, &x)| x)
            .sum::<f64>()
            / component;
        for (pid, x) in phi_full.iter_mut().enumerate() {
            if pid != corner {
                *x -= mean;
            }
        }

        // Correct interior velocities with forward differences of the
        // increment and accumulate the increment into the pressure.
        let factor = dt / h;
        for j in 1..=n - 2 {
            for i in 1..=n - 2 {
                u[idx(i, j)] -= factor * (phi_full[self.pid(i + 1, j)] - phi_full[self.pid(i, j)]);
                v[idx(i, j)] -= factor * (phi_full[self.pid(i, j + 1)] - phi_full[self.pid(i, j)]);
            }
        }
        for b in 1..=m {
            for a in 1..=m {
                p[idx(a, b)] += phi_full[self.pid(a, b)];
            }
        }
        Ok(())
    }
}

fn add_link(matrix: &mut [f64], w: usize, p: Option<usize>, q: Option<usize>) {
    match (p, q) {
        (Some(rp), Some(rq)) => {
            matrix[rp * w] += 1.0;
            matrix[rq * w] += 1.0;
            let (hi, lo) = if rp > rq { (rp, rq) } else { (rq, rp) };
            matrix[hi * w + (hi - lo)] -= 1.0;
        }
        (Some(r), None) | (None, Some(r)) => {
            matrix[r * w] += 1.0;
        }
        (None, None) => {}
    }
}
