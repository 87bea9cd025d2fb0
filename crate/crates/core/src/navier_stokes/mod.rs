//! Two-dimensional incompressible lid-driven cavity flow on the unit
//! square, discretized on a collocated `n x n` grid.
//!
//! The momentum equation `u_t + (u·grad)u + grad p = nu·Lap(u)` is split
//! for the integrators in this crate: diffusion is the implicit part,
//! upwind convection plus the (frozen) pressure gradient is the explicit
//! part. Incompressibility is restored after every completed step by an
//! incremental pressure projection (`post_step` hook): a provisional
//! velocity is projected onto the discretely divergence-free space and the
//! pressure accumulates the computed increment. The projection operators
//! are one-sided in a matched pair — forward differences for the pressure
//! gradient, backward differences for the divergence — so the pressure
//! system is an exact graph Laplacian and the post-projection divergence
//! vanishes to solver precision at every balanced node.
//!
//! State layout for the integrator interface: `[u | v | p]`, each block of
//! length `n*n` in row-major node order `j*n + i` with `j` the vertical
//! index; the moving wall is the top row `j = n-1`.

mod poisson;

use crate::error::{ConfigError, StepError};
use crate::integrators::{Method, PropagatorSpec};
use crate::parareal::{
    parareal_solve_with, relative_error_over, serial_reference, PararealError, PararealOptions,
    PararealRun, SliceDecomposition,
};
use crate::rhs::SplitRhs;
use crate::state::State;
use poisson::ProjectionSolver;

use std::fmt::Write as _;

/// Relative residual the diffusion solve is verified against.
const HELMHOLTZ_PROMISE: f64 = 1e-10;
/// Relative residual the conjugate-gradient iteration actually targets
/// (slack below the promised bound).
const HELMHOLTZ_TARGET: f64 = 1e-13;

/// Parameters of one cavity-flow problem.
///
/// Constructed values are always valid: the constructor and the `with_*`
/// refinements validate every field (`n_x >= 4`, `nu > 0`, finite lid
/// speed, `poisson_tol` in `(0, 1e-6]`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CavityConfig {
    n_x: usize,
    nu: f64,
    lid_velocity: f64,
    poisson_tol: f64,
}

impl CavityConfig {
    /// A cavity problem with the given grid resolution and viscosity, unit
    /// lid velocity and a pressure-solve tolerance of `1e-10`.
    pub fn new(n_x: usize, nu: f64) -> Result<Self, ConfigError> {
        CavityConfig {
            n_x,
            nu,
            lid_velocity: 1.0,
            poisson_tol: 1e-10,
        }
        .validated()
    }

    pub fn with_lid_velocity(mut self, lid_velocity: f64) -> Result<Self, ConfigError> {
        self.lid_velocity = lid_velocity;
        self.validated()
    }

    pub fn with_poisson_tol(mut self, poisson_tol: f64) -> Result<Self, ConfigError> {
        self.poisson_tol = poisson_tol;
        self.validated()
    }

    fn validated(self) -> Result<Self, ConfigError> {
        if self.n_x < 4 {
            return Err(ConfigError::GridTooSmall(self.n_x));
        }
        if !(self.nu > 0.0) || !self.nu.is_finite() {
            return Err(ConfigError::BadViscosity(self.nu));
        }
        if !self.lid_velocity.is_finite() {
            return Err(ConfigError::BadLidVelocity(self.lid_velocity));
        }
        if !(self.poisson_tol > 0.0) || self.poisson_tol > 1e-6 {
            return Err(ConfigError::BadPoissonTol(self.poisson_tol));
        }
        Ok(self)
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn lid_velocity(&self) -> f64 {
        self.lid_velocity
    }

    pub fn poisson_tol(&self) -> f64 {
        self.poisson_tol
    }

    /// Grid spacing `1 / (n_x - 1)`.
    pub fn spacing(&self) -> f64 {
        1.0 / (self.n_x as f64 - 1.0)
    }

    /// Number of velocity degrees of freedom (`2 n_x^2`); the leading block
    /// of the state vector, and the block convergence norms are taken over.
    pub fn velocity_dofs(&self) -> usize {
        2 * self.n_x * self.n_x
    }
}

/// Discrete `(u, v, p)` fields on the collocated grid.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    n: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    p: Vec<f64>,
}

#[inline]
fn node(n: usize, i: usize, j: usize) -> usize {
    j * n + i
}

fn impose_boundary_slices(n: usize, u: &mut [f64], v: &mut [f64], lid: f64) {
    for i in 0..n {
        u[node(n, i, 0)] = 0.0;
        v[node(n, i, 0)] = 0.0;
        let top = node(n, i, n - 1);
        u[top] = if i == 0 || i == n - 1 { 0.0 } else { lid };
        v[top] = 0.0;
    }
    for j in 0..n {
        let (l, r) = (node(n, 0, j), node(n, n - 1, j));
        u[l] = 0.0;
        v[l] = 0.0;
        u[r] = 0.0;
        v[r] = 0.0;
    }
}

impl FlowField {
    /// The fluid at rest with boundary conditions imposed and zero pressure.
    pub fn at_rest(config: &CavityConfig) -> Self {
        let n = config.n_x;
        let mut field = FlowField {
            n,
            u: vec![0.0; n * n],
            v: vec![0.0; n * n],
            p: vec![0.0; n * n],
        };
        field.impose_boundary(config.lid_velocity);
        field
    }

    pub fn resolution(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        1.0 / (self.n as f64 - 1.0)
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn v(&self) -> &[f64] {
        &self.v
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Flat index of node `(i, j)`.
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        assert!(i < self.n && j < self.n);
        node(self.n, i, j)
    }

    /// Rebuilds a field from the integrator state layout `[u | v | p]`.
    pub fn from_state(state: &State, n_x: usize) -> Self {
        let m = n_x * n_x;
        assert_eq!(state.len(), 3 * m, "state length must be 3 * n_x^2");
        let s = state.as_slice();
        FlowField {
            n: n_x,
            u: s[..m].to_vec(),
            v: s[m..2 * m].to_vec(),
            p: s[2 * m..].to_vec(),
        }
    }

    /// Flattens the field into the integrator state layout `[u | v | p]`.
    pub fn to_state(&self) -> State {
        let mut out = Vec::with_capacity(3 * self.n * self.n);
        out.extend_from_slice(&self.u);
        out.extend_from_slice(&self.v);
        out.extend_from_slice(&self.p);
        State::new(out)
    }

    /// Writes the cavity boundary values: `u = lid_velocity`, `v = 0` on
    /// the top row (corners at rest), `u = v = 0` on the other walls.
    pub fn impose_boundary(&mut self, lid_velocity: f64) {
        impose_boundary_slices(self.n, &mut self.u, &mut self.v, lid_velocity);
    }

    /// Backward-difference divergence at offset node `(a, b)`,
    /// `a, b` in `1..=n-1` — the node set the projection balances.
    pub fn divergence_at(&self, a: usize, b: usize) -> f64 {
        let n = self.n;
        assert!((1..n).contains(&a) && (1..n).contains(&b));
        let h = self.spacing();
        (self.u[node(n, a, b)] - self.u[node(n, a - 1, b)] + self.v[node(n, a, b)]
            - self.v[node(n, a, b - 1)])
            / h
    }

    /// Max-norm of the discrete divergence over all balanced offset nodes.
    ///
    /// The two offset nodes hugging the moving wall, `(1, n-1)` and
    /// `(n-1, n-1)`, are excluded: the boundary data alone fixes their
    /// divergence at `±lid/h` (a discrete corner dipole no interior field
    /// can cancel), so they carry no information about projection quality.
    pub fn max_divergence(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0_f64;
        for b in 1..n {
            for a in 1..n {
                if b == n - 1 && (a == 1 || a == n - 1) {
                    continue;
                }
                worst = worst.max(self.divergence_at(a, b).abs());
            }
        }
        worst
    }

    /// The divergence ceiling this field must satisfy after a projection
    /// with the given tolerance: `10 * tol * (|u|_inf + |v|_inf) / h`.
    pub fn divergence_bound(&self, poisson_tol: f64) -> f64 {
        let speed = self.u.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
            + self.v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        10.0 * poisson_tol * speed / self.spacing()
    }

    /// CSV snapshot with header `x,y,u,v,p`, one row per node, `y`-major.
    pub fn snapshot_csv(&self) -> String {
        let n = self.n;
        let h = self.spacing();
        let mut out = String::from("x,y,u,v,p\n");
        for j in 0..n {
            for i in 0..n {
                let id = node(n, i, j);
                writeln!(
                    out,
                    "{},{},{:.16e},{:.16e},{:.16e}",
                    i as f64 * h,
                    j as f64 * h,
                    self.u[id],
                    self.v[id],
                    self.p[id]
                )
                .expect("writing to a String cannot fail");
            }
        }
        out
    }
}

fn split_state(state: &State, n: usize) -> (&[f64], &[f64], &[f64]) {
    let m = n * n;
    let s = state.as_slice();
    debug_assert_eq!(s.len(), 3 * m);
    (&s[..m], &s[m..2 * m], &s[2 * m..])
}

fn split_state_mut(state: &mut State, n: usize) -> (&mut [f64], &mut [f64], &mut [f64]) {
    let m = n * n;
    let s = state.as_mut_slice();
    debug_assert_eq!(s.len(), 3 * m);
    let (uv, p) = s.split_at_mut(2 * m);
    let (u, v) = uv.split_at_mut(m);
    (u, v, p)
}

/// First-order upwind convection `-(u·grad)u` at interior nodes.
///
/// Each advective derivative uses the backward difference where the
/// advecting component is non-negative and the forward difference where it
/// is negative; `u` decides x-derivatives, `v` decides y-derivatives.
fn convection_into(n: usize, u: &[f64], v: &[f64], du: &mut [f64], dv: &mut [f64]) {
    let h = 1.0 / (n as f64 - 1.0);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let id = node(n, i, j);
            let ax = u[id];
            let ay = v[id];
            let ddx = |w: &[f64]| {
                if ax >= 0.0 {
                    (w[id] - w[id - 1]) / h
                } else {
                    (w[id + 1] - w[id]) / h
                }
            };
            let ddy = |w: &[f64]| {
                if ay >= 0.0 {
                    (w[id] - w[id - n]) / h
                } else {
                    (w[id + n] - w[id]) / h
                }
            };
            du[id] = -(ax * ddx(u) + ay * ddy(u));
            dv[id] = -(ax * ddx(v) + ay * ddy(v));
        }
    }
}

/// `nu` times the 5-point Laplacian of each velocity component at interior
/// nodes.
fn diffusion_into(n: usize, nu: f64, u: &[f64], v: &[f64], du: &mut [f64], dv: &mut [f64]) {
    let h = 1.0 / (n as f64 - 1.0);
    let c = nu / (h * h);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let id = node(n, i, j);
            du[id] = c * (u[id - 1] + u[id + 1] + u[id - n] + u[id + n] - 4.0 * u[id]);
            dv[id] = c * (v[id - 1] + v[id + 1] + v[id - n] + v[id + n] - 4.0 * v[id]);
        }
    }
}

/// Subtracts the forward-difference pressure gradient at interior nodes.
fn subtract_pressure_gradient(n: usize, p: &[f64], du: &mut [f64], dv: &mut [f64]) {
    let h = 1.0 / (n as f64 - 1.0);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let id = node(n, i, j);
            du[id] -= (p[id + 1] - p[id]) / h;
            dv[id] -= (p[id + n] - p[id]) / h;
        }
    }
}

/// Upwind convection tendency `-(u·grad)u` of a flow field (interior
/// nodes; boundary entries zero).
pub fn convection_tendency(field: &FlowField) -> (Vec<f64>, Vec<f64>) {
    let n = field.n;
    let mut du = vec![0.0; n * n];
    let mut dv = vec![0.0; n * n];
    convection_into(n, &field.u, &field.v, &mut du, &mut dv);
    (du, dv)
}

/// Diffusion tendency `nu·Lap(u)` of a flow field (interior nodes;
/// boundary entries zero).
pub fn diffusion_tendency(field: &FlowField, nu: f64) -> (Vec<f64>, Vec<f64>) {
    let n = field.n;
    let mut du = vec![0.0; n * n];
    let mut dv = vec![0.0; n * n];
    diffusion_into(n, nu, &field.u, &field.v, &mut du, &mut dv);
    (du, dv)
}

/// Projects a provisional velocity field onto the discretely
/// divergence-free space and accumulates the pressure increment.
///
/// Solves the pressure-increment system to the configured tolerance with
/// zero-mean gauge, updates `u <- u* - dt·grad(phi)`, `p <- p + phi`, and
/// re-imposes the boundary conditions. This convenience entry point
/// assembles and factors the pressure matrix on every call; the
/// time-stepping path in [`CavityRhs`] keeps a factored solver and reuses
/// it for every step.
pub fn pressure_projection(
    field: &FlowField,
    dt: f64,
    config: &CavityConfig,
) -> Result<FlowField, StepError> {
    assert!(dt > 0.0 && dt.is_finite(), "time step must be positive");
    assert_eq!(field.n, config.n_x, "field and config grids must agree");
    let solver = ProjectionSolver::new(config.n_x)
        .expect("pressure matrix is positive definite for every valid grid");
    let mut out = field.clone();
    solver.project(&mut out.u, &mut out.v, &mut out.p, dt, config.poisson_tol)?;
    out.impose_boundary(config.lid_velocity);
    Ok(out)
}

/// The cavity problem as a split right-hand side for the integrators:
/// implicit diffusion, explicit upwind convection plus frozen pressure
/// gradient, and an incremental pressure projection after every completed
/// step.
pub struct CavityRhs {
    config: CavityConfig,
    solver: ProjectionSolver,
}

impl CavityRhs {
    pub fn config(&self) -> &CavityConfig {
        &self.config
    }

    /// The study's initial condition: fluid at rest under the moving lid.
    pub fn initial_state(&self) -> State {
        FlowField::at_rest(&self.config).to_state()
    }
}

/// Builds the split right-hand side for a cavity problem, assembling and
/// factoring its pressure solver once.
pub fn cavity_rhs(config: &CavityConfig) -> Result<CavityRhs, ConfigError> {
    let solver = ProjectionSolver::new(config.n_x)?;
    Ok(CavityRhs {
        config: *config,
        solver,
    })
}

/// Solves `(I - coef·Lap) x = rhs` for one velocity component with
/// Dirichlet boundary rows (`x = rhs` on the boundary) by conjugate
/// gradients, verified to relative residual `1e-10`.
fn solve_helmholtz(n: usize, coef: f64, rhs: &[f64]) -> Result<Vec<f64>, StepError> {
    let h = 1.0 / (n as f64 - 1.0);
    let c = coef / (h * h);
    let m = n * n;
    debug_assert_eq!(rhs.len(), m);

    // Applies the operator: identity on boundary rows, `x - c·(sum of
    // neighbors - 4x)` on interior rows.
    let apply = |x: &[f64], out: &mut [f64]| {
        out.copy_from_slice(x);
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let id = node(n, i, j);
                out[id] = x[id] - c * (x[id - 1] + x[id + 1] + x[id - n] + x[id + n] - 4.0 * x[id]);
            }
        }
    };
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

    let b_norm = dot(rhs, rhs).sqrt();
    let mut x = rhs.to_vec();
    if b_norm == 0.0 {
        return Ok(x);
    }

    let mut r = vec![0.0; m];
    let mut buf = vec![0.0; m];
    apply(&x, &mut buf);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let id = node(n, i, j);
            r[id] = rhs[id] - buf[id];
        }
    }
    let mut rr = dot(&r, &r);
    let target = HELMHOLTZ_TARGET * b_norm;
    let cap = 4 * m + 100;
    let mut p = r.clone();
    let mut iterations = 0;
    while rr.sqrt() > target && iterations < cap {
        apply(&p, &mut buf);
        let alpha = rr / dot(&p, &buf);
        if !alpha.is_finite() {
            break;
        }
        for id in 0..m {
            x[id] += alpha * p[id];
            r[id] -= alpha * buf[id];
        }
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for id in 0..m {
            p[id] = r[id] + beta * p[id];
        }
        iterations += 1;
    }

    // Verify the true residual against the promised bound.
    apply(&x, &mut buf);
    let mut true_res = 0.0_f64;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let id = node(n, i, j);
            true_res += (rhs[id] - buf[id]) * (rhs[id] - buf[id]);
        }
    }
    let residual = true_res.sqrt() / b_norm;
    if !(residual <= HELMHOLTZ_PROMISE) {
        return Err(StepError::ImplicitSolveFailed {
            residual,
            iterations,
        });
    }
    Ok(x)
}

impl SplitRhs for CavityRhs {
    fn explicit_tendency(&self, state: &State, _t: f64) -> State {
        let n = self.config.n_x;
        let (u, v, p) = split_state(state, n);
        let mut out = State::zeros(state.len());
        {
            let (du, dv, _) = split_state_mut(&mut out, n);
            convection_into(n, u, v, du, dv);
            subtract_pressure_gradient(n, p, du, dv);
        }
        out
    }

    fn implicit_tendency(&self, state: &State, _t: f64) -> State {
        let n = self.config.n_x;
        let (u, v, _) = split_state(state, n);
        let mut out = State::zeros(state.len());
        {
            let (du, dv, _) = split_state_mut(&mut out, n);
            diffusion_into(n, self.config.nu, u, v, du, dv);
        }
        out
    }

    fn implicit_solve(&self, rhs: &State, _t: f64, dt: f64) -> Result<State, StepError> {
        let n = self.config.n_x;
        let (bu, bv, bp) = split_state(rhs, n);
        let coef = dt * self.config.nu;
        let mut out = Vec::with_capacity(rhs.len());
        out.extend_from_slice(&solve_helmholtz(n, coef, bu)?);
        out.extend_from_slice(&solve_helmholtz(n, coef, bv)?);
        // Pressure is not diffused: identity block.
        out.extend_from_slice(bp);
        Ok(State::new(out))
    }

    fn post_step(&self, state: &mut State, _t: f64, dt: f64) -> Result<(), StepError> {
        if !state.is_finite() {
            return Err(StepError::NonFiniteState);
        }
        let n = self.config.n_x;
        let (u, v, p) = split_state_mut(state, n);
        self.solver.project(u, v, p, dt, self.config.poisson_tol)?;
        impose_boundary_slices(n, u, v, self.config.lid_velocity);
        Ok(())
    }
}

/// A cavity parareal run together with the serial fine reference it was
/// measured against.
#[derive(Clone, Debug)]
pub struct CavityRun {
    pub run: PararealRun,
    /// Serial fine trajectory at the slice boundaries, `N + 1` states.
    pub reference: Vec<State>,
    /// Error of the serial coarse prediction (iteration 0) against the
    /// reference, in the same norm as `run.errors`.
    pub coarse_prediction_error: f64,
}

/// The time decomposition of the convergence study: horizon `T = 15` split
/// into `15` slices, coarse step `1/200`, fine step `1/500`.
pub fn default_cavity_decomposition() -> SliceDecomposition {
    SliceDecomposition::new(15.0, 15, 200, 500).expect("constants are a valid decomposition")
}

/// Runs parareal on a cavity problem from rest: IMEX Euler as the coarse
/// propagator, explicit RK3 as the fine propagator, errors measured
/// against the serial fine reference in the velocity max-norm.
pub fn run_cavity_parareal(
    config: &CavityConfig,
    decomp: &SliceDecomposition,
    max_iter: usize,
) -> Result<PararealRun, PararealError> {
    run_cavity_parareal_detailed(config, decomp, &PararealOptions::new(max_iter)).map(|d| d.run)
}

/// [`run_cavity_parareal`] keeping the reference trajectory and the
/// iteration-0 error alongside the run. `options.error_dofs` is forced to
/// the velocity block: convergence is measured on `(u, v)` only, since the
/// pressure is a derived quantity of the projection.
pub fn run_cavity_parareal_detailed(
    config: &CavityConfig,
    decomp: &SliceDecomposition,
    options: &PararealOptions,
) -> Result<CavityRun, PararealError> {
    let rhs = cavity_rhs(config).map_err(|e| PararealError::InvalidConfig(e.to_string()))?;
    let u0 = rhs.initial_state();
    let fine = PropagatorSpec::new(Method::Rk3Explicit, decomp.fine_dt(), &rhs);
    let coarse = PropagatorSpec::new(Method::ImexEuler, decomp.coarse_dt(), &rhs);

    let reference = serial_reference(&fine, decomp, &u0)?;
    let mut opts = *options;
    opts.error_dofs = Some(config.velocity_dofs());
    let run = parareal_solve_with(&fine, &coarse, decomp, &u0, &opts, Some(&reference))?;
    let coarse_prediction_error = relative_error_over(
        &run.iterates[0][1..],
        &reference[1..],
        config.velocity_dofs(),
    )?;
    Ok(CavityRun {
        run,
        reference,
        coarse_prediction_error,
    })
}

/// Convergence history as CSV with header `nx,nu,dt_coarse,k,error`; the
/// `k = 0` row is the serial coarse prediction error.
pub fn history_csv(
    config: &CavityConfig,
    decomp: &SliceDecomposition,
    cavity_run: &CavityRun,
) -> String {
    let mut out = String::from("nx,nu,dt_coarse,k,error\n");
    let prefix = format!("{},{},{}", config.n_x, config.nu, decomp.coarse_dt());
    writeln!(
        out,
        "{prefix},0,{:.16e}",
        cavity_run.coarse_prediction_error
    )
    .expect("writing to a String cannot fail");
    for (k, e) in cavity_run.run.errors.iter().enumerate() {
        writeln!(out, "{prefix},{},{:.16e}", k + 1, e).expect("writing to a String cannot fail");
    }
    out
}
