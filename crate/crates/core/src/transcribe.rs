//! Euler transcription of the augmented system.
//!
//! On the grid `t_i = a + i Δt`, `i = 0..=n`, the dynamics become
//!
//! ```text
//! x_{i+1}   = x_i   + Δt F(t_i, x_i, V_i, u_i)
//! V_{p,i+1} = V_{p,i} + Δt (1-p)(t_i - a)^(p-2) x_i
//! ```
//!
//! and the cost becomes the left Riemann sum `Δt Σ_{i<n} L(t_i, x_i, u_i)`.
//! Controls are piecewise constant, `u_i` acting on `[t_i, t_{i+1})`, so there
//! is no `u_n`.
//!
//! Two decision layouts are offered. [`Mode::Full`] keeps every state as an
//! unknown and imposes the Euler steps as defect constraints; it is the
//! nonlinear program exactly as written above. [`Mode::Shooting`] keeps only
//! the controls and reconstructs states by forward simulation. Gradients in
//! both modes are exact (a reverse sweep in shooting mode).

use std::ops::Range;

use thiserror::Error;

use crate::focp::{AugmentedSystem, ProblemError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TranscribeError {
    #[error("grid needs n >= 2 steps and b > a (got n = {n}, a = {a}, b = {b})")]
    InvalidGrid { n: usize, a: f64, b: f64 },
    #[error("grid [{grid_a}, {grid_b}] does not match problem interval [{a}, {b}]")]
    IntervalMismatch { grid_a: f64, grid_b: f64, a: f64, b: f64 },
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("non-finite state after Euler step {step}")]
    NonFiniteState { step: usize },
    #[error("non-finite value in decision vector at index {0}")]
    NonFiniteInput(usize),
    #[error("at step {step}: {source}")]
    Problem { step: usize, source: ProblemError },
}

/// Equispaced time grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    a: f64,
    b: f64,
    dt: f64,
    offset_first_step: bool,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self, TranscribeError> {
        if n < 2 || !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(TranscribeError::InvalidGrid { n, a, b });
        }
        Ok(Self { n, a, b, dt: (b - a) / n as f64, offset_first_step: false })
    }

    /// Evaluate the first Euler step at `a + Δt` instead of `a`.
    ///
    /// Needed when `M = 0`: then `F` has no value at the left endpoint.
    pub fn with_start_offset(mut self) -> Self {
        self.offset_first_step = true;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn has_start_offset(&self) -> bool {
        self.offset_first_step
    }

    /// Node `t_i`.
    pub fn t(&self, i: usize) -> f64 {
        if i == self.n {
            self.b
        } else {
            self.a + i as f64 * self.dt
        }
    }

    /// Time at which the right-hand sides of step `i` are evaluated.
    pub fn eval_time(&self, i: usize) -> f64 {
        if i == 0 && self.offset_first_step {
            self.a + self.dt
        } else {
            self.t(i)
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|i| self.t(i)).collect()
    }
}

/// States and controls on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub grid: Grid,
    /// `x_0..x_n`
    pub x: Vec<f64>,
    /// `u_0..u_{n-1}`
    pub u: Vec<f64>,
    /// `v[p - 2][i] = V_{p,i}`
    pub v: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn truncation(&self) -> usize {
        self.v.len() + 1
    }

    /// Full state `(x_i, V_{2,i}, ..., V_{K,i})`.
    pub fn state(&self, i: usize) -> Vec<f64> {
        let mut s = Vec::with_capacity(self.v.len() + 1);
        s.push(self.x[i]);
        s.extend(self.v.iter().map(|vp| vp[i]));
        s
    }
}

fn check_interval(aug: &AugmentedSystem, grid: &Grid) -> Result<(), TranscribeError> {
    let p = aug.focp();
    if grid.a != p.a() || grid.b != p.b() {
        return Err(TranscribeError::IntervalMismatch { grid_a: grid.a, grid_b: grid.b, a: p.a(), b: p.b() });
    }
    Ok(())
}

fn initial_state(aug: &AugmentedSystem) -> Vec<f64> {
    let mut s = vec![0.0; aug.state_dim()];
    s[0] = aug.focp().x_a();
    s
}

/// One Euler step of the augmented system; writes `s_{i+1}` into `next`.
fn euler_step(
    aug: &AugmentedSystem,
    grid: &Grid,
    i: usize,
    state: &[f64],
    u: f64,
    next: &mut [f64],
) -> Result<(), TranscribeError> {
    let te = grid.eval_time(i);
    let dt = grid.dt;
    let x = state[0];
    let f = aug.rhs(te, x, &state[1..], u).map_err(|source| TranscribeError::Problem { step: i, source })?;
    next[0] = x + dt * f;
    for p in 2..=aug.truncation() {
        next[p - 1] = state[p - 1] + dt * aug.moment_rhs(p, te, x);
    }
    Ok(())
}

/// Jacobians of one Euler step: `ds[r][c] = ∂s_{i+1,r}/∂s_{i,c}`, `du[r]`.
struct StepJacobian {
    f_dx: f64,
    f_du: f64,
    f_dv: Vec<f64>,
    // (1-p)(t-a)^(p-2) for p = 2..K
    moment_dx: Vec<f64>,
}

fn step_jacobian(
    aug: &AugmentedSystem,
    grid: &Grid,
    i: usize,
    state: &[f64],
    u: f64,
) -> Result<StepJacobian, TranscribeError> {
    let te = grid.eval_time(i);
    let p = aug
        .rhs_partials(te, state[0], &state[1..], u)
        .map_err(|source| TranscribeError::Problem { step: i, source })?;
    let moment_dx = (2..=aug.truncation())
        .map(|q| (1.0 - q as f64) * aug.moment_weight(q, te))
        .collect();
    Ok(StepJacobian { f_dx: p.dx, f_du: p.du, f_dv: p.dv, moment_dx })
}

impl StepJacobian {
    /// `out = (∂s_{i+1}/∂s_i)^T adj`
    fn transpose_state(&self, dt: f64, adj: &[f64], out: &mut [f64]) {
        let mut head = adj[0] * (1.0 + dt * self.f_dx);
        for (q, &m) in self.moment_dx.iter().enumerate() {
            head += adj[q + 1] * dt * m;
            out[q + 1] = adj[q + 1] + adj[0] * dt * self.f_dv[q];
        }
        out[0] = head;
    }

    /// `(∂s_{i+1}/∂u_i)^T adj`
    fn transpose_control(&self, dt: f64, adj: &[f64]) -> f64 {
        adj[0] * dt * self.f_du
    }
}

/// Forward Euler recursion from `x_0 = x_a`, `V_{p,0} = 0`.
pub fn simulate(aug: &AugmentedSystem, grid: &Grid, u: &[f64]) -> Result<Trajectory, TranscribeError> {
    check_interval(aug, grid)?;
    let n = grid.n;
    if u.len() != n {
        return Err(TranscribeError::Dimension { expected: n, got: u.len() });
    }
    let k = aug.truncation();
    let mut x = Vec::with_capacity(n + 1);
    let mut v: Vec<Vec<f64>> = (2..=k).map(|_| Vec::with_capacity(n + 1)).collect();
    let mut state = initial_state(aug);
    let mut next = vec![0.0; k];
    for i in 0..n {
        x.push(state[0]);
        for (series, &s) in v.iter_mut().zip(&state[1..]) {
            series.push(s);
        }
        euler_step(aug, grid, i, &state, u[i], &mut next)?;
        if next.iter().any(|s| !s.is_finite()) {
            return Err(TranscribeError::NonFiniteState { step: i });
        }
        std::mem::swap(&mut state, &mut next);
    }
    x.push(state[0]);
    for (series, &s) in v.iter_mut().zip(&state[1..]) {
        series.push(s);
    }
    Ok(Trajectory { grid: *grid, x, u: u.to_vec(), v })
}

/// Left Riemann sum `Δt Σ_{i<n} L(t_i, x_i, u_i)`.
pub fn discrete_objective(aug: &AugmentedSystem, grid: &Grid, traj: &Trajectory) -> Result<f64, TranscribeError> {
    let n = grid.n;
    if traj.x.len() != n + 1 || traj.u.len() != n {
        return Err(TranscribeError::Dimension { expected: n, got: traj.u.len() });
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += aug
            .cost(grid.t(i), traj.x[i], traj.u[i])
            .map_err(|source| TranscribeError::Problem { step: i, source })?;
    }
    Ok(grid.dt * acc)
}

/// Decision layout of the transcribed program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    /// States and controls are unknowns; Euler steps are equality constraints.
    Full,
    /// Controls only; states come from [`simulate`].
    Shooting,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Mode::Full),
            "shooting" => Ok(Mode::Shooting),
            other => Err(format!("unknown mode `{other}` (expected full or shooting)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Full => "full",
            Mode::Shooting => "shooting",
        })
    }
}

/// The finite-dimensional program produced by Euler transcription.
///
/// Full-mode layout: `[x_1..x_n, V_{2,1..n}, ..., V_{K,1..n}, u_0..u_{n-1}]`.
/// Constraints: the `x` defects for steps `0..n`, then the `V_2` defects, and
/// so on, followed by `x_n - x_b` when the endpoint is fixed.
///
/// Shooting-mode layout: `[u_0..u_{n-1}]`, with `x_n - x_b` as the only
/// constraint when the endpoint is fixed.
#[derive(Debug, Clone)]
pub struct DiscreteNlp {
    aug: AugmentedSystem,
    grid: Grid,
    mode: Mode,
}

/// Transcribe the augmented problem on `grid`.
pub fn transcribe(aug: &AugmentedSystem, grid: &Grid, mode: Mode) -> Result<DiscreteNlp, TranscribeError> {
    check_interval(aug, grid)?;
    Ok(DiscreteNlp { aug: aug.clone(), grid: *grid, mode })
}

/// Gradient of the discrete objective at `z`.
pub fn gradient(nlp: &DiscreteNlp, z: &[f64]) -> Result<Vec<f64>, TranscribeError> {
    nlp.objective_gradient(z)
}

impl DiscreteNlp {
    pub fn augmented(&self) -> &AugmentedSystem {
        &self.aug
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn fixed_endpoint(&self) -> Option<f64> {
        self.aug.focp().x_b()
    }

    fn k(&self) -> usize {
        self.aug.truncation()
    }

    pub fn dim(&self) -> usize {
        let n = self.grid.n;
        match self.mode {
            Mode::Full => self.k() * n + n,
            Mode::Shooting => n,
        }
    }

    pub fn num_constraints(&self) -> usize {
        let terminal = usize::from(self.fixed_endpoint().is_some());
        match self.mode {
            Mode::Full => self.k() * self.grid.n + terminal,
            Mode::Shooting => terminal,
        }
    }

    /// Indices of `u_0..u_{n-1}` in the decision vector.
    pub fn control_range(&self) -> Range<usize> {
        let n = self.grid.n;
        match self.mode {
            Mode::Full => self.k() * n..self.k() * n + n,
            Mode::Shooting => 0..n,
        }
    }

    /// Full mode: index of state component `c` (0 = x, p - 1 = V_p) at node `i >= 1`.
    pub fn state_index(&self, c: usize, i: usize) -> usize {
        debug_assert!(self.mode == Mode::Full && i >= 1);
        c * self.grid.n + (i - 1)
    }

    /// Full mode: index of the defect constraint for state component `c` on step `i`.
    pub fn defect_index(&self, c: usize, i: usize) -> usize {
        c * self.grid.n + i
    }

    /// Index of the terminal constraint, if any.
    pub fn terminal_index(&self) -> Option<usize> {
        self.fixed_endpoint().map(|_| self.num_constraints() - 1)
    }

    fn check_input(&self, z: &[f64]) -> Result<(), TranscribeError> {
        if z.len() != self.dim() {
            return Err(TranscribeError::Dimension { expected: self.dim(), got: z.len() });
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return Err(TranscribeError::NonFiniteInput(i));
        }
        Ok(())
    }

    /// Full-mode node state `s_i` read from `z` (`s_0` is the initial condition).
    fn state_at(&self, z: &[f64], i: usize, out: &mut [f64]) {
        if i == 0 {
            out.copy_from_slice(&initial_state(&self.aug));
        } else {
            for (c, o) in out.iter_mut().enumerate() {
                *o = z[self.state_index(c, i)];
            }
        }
    }

    /// Trajectory encoded by `z` (shooting mode simulates).
    pub fn trajectory(&self, z: &[f64]) -> Result<Trajectory, TranscribeError> {
        self.check_input(z)?;
        let u = z[self.control_range()].to_vec();
        match self.mode {
            Mode::Shooting => simulate(&self.aug, &self.grid, &u),
            Mode::Full => {
                let n = self.grid.n;
                let k = self.k();
                let mut x = vec![self.aug.focp().x_a()];
                x.extend((1..=n).map(|i| z[self.state_index(0, i)]));
                let v = (2..=k)
                    .map(|p| {
                        let mut series = vec![0.0];
                        series.extend((1..=n).map(|i| z[self.state_index(p - 1, i)]));
                        series
                    })
                    .collect();
                Ok(Trajectory { grid: self.grid, x, u, v })
            }
        }
    }

    /// Decision vector for a trajectory (states are ignored in shooting mode).
    pub fn pack(&self, traj: &Trajectory) -> Result<Vec<f64>, TranscribeError> {
        let n = self.grid.n;
        if traj.u.len() != n || traj.x.len() != n + 1 || traj.truncation() != self.k() {
            return Err(TranscribeError::Dimension { expected: n, got: traj.u.len() });
        }
        match self.mode {
            Mode::Shooting => Ok(traj.u.clone()),
            Mode::Full => {
                let mut z = vec![0.0; self.dim()];
                for i in 1..=n {
                    z[self.state_index(0, i)] = traj.x[i];
                    for p in 2..=self.k() {
                        z[self.state_index(p - 1, i)] = traj.v[p - 2][i];
                    }
                }
                z[self.control_range()].copy_from_slice(&traj.u);
                Ok(z)
            }
        }
    }

    /// Zero controls; in full mode the states simulated from them.
    pub fn initial_point(&self) -> Result<Vec<f64>, TranscribeError> {
        let traj = simulate(&self.aug, &self.grid, &vec![0.0; self.grid.n])?;
        self.pack(&traj)
    }

    /// Objective value and constraint values at `z`.
    pub fn evaluate(&self, z: &[f64]) -> Result<(f64, Vec<f64>), TranscribeError> {
        self.check_input(z)?;
        let mut c = vec![0.0; self.num_constraints()];
        let traj = match self.mode {
            Mode::Shooting => self.trajectory(z)?,
            Mode::Full => {
                let traj = self.trajectory(z)?;
                let k = self.k();
                let mut state = vec![0.0; k];
                let mut next = vec![0.0; k];
                for i in 0..self.grid.n {
                    self.state_at(z, i, &mut state);
                    euler_step(&self.aug, &self.grid, i, &state, traj.u[i], &mut next)?;
                    for (comp, &nv) in next.iter().enumerate() {
                        let actual = if comp == 0 { traj.x[i + 1] } else { traj.v[comp - 1][i + 1] };
                        c[self.defect_index(comp, i)] = actual - nv;
                    }
                }
                traj
            }
        };
        if let (Some(xb), Some(ti)) = (self.fixed_endpoint(), self.terminal_index()) {
            c[ti] = traj.x[self.grid.n] - xb;
        }
        let f = discrete_objective(&self.aug, &self.grid, &traj)?;
        Ok((f, c))
    }

    pub fn objective(&self, z: &[f64]) -> Result<f64, TranscribeError> {
        Ok(self.evaluate(z)?.0)
    }

    pub fn constraints(&self, z: &[f64]) -> Result<Vec<f64>, TranscribeError> {
        Ok(self.evaluate(z)?.1)
    }

    pub fn objective_gradient(&self, z: &[f64]) -> Result<Vec<f64>, TranscribeError> {
        self.weighted_gradient(z, 1.0, &vec![0.0; self.num_constraints()])
    }

    /// `J(z)^T w`, the constraint Jacobian transposed applied to `w`.
    pub fn jacobian_transpose_product(&self, z: &[f64], w: &[f64]) -> Result<Vec<f64>, TranscribeError> {
        self.weighted_gradient(z, 0.0, w)
    }

    /// `σ ∇f(z) + J(z)^T w` in a single sweep.
    pub fn weighted_gradient(&self, z: &[f64], sigma: f64, w: &[f64]) -> Result<Vec<f64>, TranscribeError> {
        self.check_input(z)?;
        if w.len() != self.num_constraints() {
            return Err(TranscribeError::Dimension { expected: self.num_constraints(), got: w.len() });
        }
        match self.mode {
            Mode::Shooting => self.shooting_gradient(z, sigma, w),
            Mode::Full => self.full_gradient(z, sigma, w),
        }
    }

    fn shooting_gradient(&self, z: &[f64], sigma: f64, w: &[f64]) -> Result<Vec<f64>, TranscribeError> {
        let traj = simulate(&self.aug, &self.grid, z)?;
        let n = self.grid.n;
        let dt = self.grid.dt;
        let k = self.k();
        let mut grad = vec![0.0; n];
        let mut adj = vec![0.0; k];
        if let Some(ti) = self.terminal_index() {
            adj[0] = w[ti];
        }
        let mut scratch = vec![0.0; k];
        for i in (0..n).rev() {
            let state = traj.state(i);
            let jac = step_jacobian(&self.aug, &self.grid, i, &state, z[i])?;
            let cost = self
                .aug
                .cost_partials(self.grid.t(i), state[0], z[i])
                .map_err(|source| TranscribeError::Problem { step: i, source })?;
            grad[i] = sigma * dt * cost.du + jac.transpose_control(dt, &adj);
            jac.transpose_state(dt, &adj, &mut scratch);
            scratch[0] += sigma * dt * cost.dx;
            std::mem::swap(&mut adj, &mut scratch);
        }
        Ok(grad)
    }

    fn full_gradient(&self, z: &[f64], sigma: f64, w: &[f64]) -> Result<Vec<f64>, TranscribeError> {
        let n = self.grid.n;
        let dt = self.grid.dt;
        let k = self.k();
        let urange = self.control_range();
        let mut grad = vec![0.0; self.dim()];
        let mut state = vec![0.0; k];
        let mut wk = vec![0.0; k];
        let mut back = vec![0.0; k];
        for i in 0..n {
            self.state_at(z, i, &mut state);
            let u = z[urange.start + i];
            let cost = self
                .aug
                .cost_partials(self.grid.t(i), state[0], u)
                .map_err(|source| TranscribeError::Problem { step: i, source })?;
            grad[urange.start + i] += sigma * dt * cost.du;
            if i >= 1 {
                grad[self.state_index(0, i)] += sigma * dt * cost.dx;
            }
            // defect_c = s_{i+1,c} - step_c(s_i, u_i)
            for (c, slot) in wk.iter_mut().enumerate() {
                *slot = w[self.defect_index(c, i)];
                grad[self.state_index(c, i + 1)] += *slot;
            }
            let jac = step_jacobian(&self.aug, &self.grid, i, &state, u)?;
            grad[urange.start + i] -= jac.transpose_control(dt, &wk);
            if i >= 1 {
                jac.transpose_state(dt, &wk, &mut back);
                for (c, &b) in back.iter().enumerate() {
                    grad[self.state_index(c, i)] -= b;
                }
            }
        }
        if let Some(ti) = self.terminal_index() {
            grad[self.state_index(0, n)] += w[ti];
        }
        Ok(grad)
    }
}
