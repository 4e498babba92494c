//! Necessary-condition certificate for a direct solution.
//!
//! For the augmented problem the Hamiltonian is
//!
//! ```text
//! H = L(t, x, u) + λ_1 F(t, x, V, u) + Σ_{p=2..K} λ_p (1-p)(t-a)^(p-2) x
//! ```
//!
//! and an optimal pair satisfies `∂H/∂u = 0`, `λ_1' = -∂H/∂x`,
//! `λ_p' = -∂H/∂V_p`, with `λ(b) = 0` for the free components of the final
//! state. [`pontryagin_check`] rebuilds the costates from the multipliers of
//! a full-mode solve and reports how far the discrete solution is from these
//! conditions.
//!
//! Costate convention: the defect constraints are written
//! `s_{i+1} - s_i - Δt G(t_i, s_i, u_i) = 0` and the objective carries the
//! factor `Δt`, so the KKT conditions of the program read
//! `(λ_{i+1} - λ_i)/Δt = -H_s(t_i, s_i, λ_{i+1}, u_i)` with `λ_{i+1} = -μ_i`,
//! where `μ_i` is the multiplier of the step-`i` defect. The costate at node
//! `i >= 1` is therefore `-μ_{i-1}`; node 0 reuses the node-1 value.
//!
//! The stationarity residual samples `∂H/∂u` at each node with that nodal
//! costate, so it carries an `O(Δt)` consistency error and shrinks as the
//! grid is refined. The costate defect is the forward-Euler adjoint residual
//! above, with `H_s` taken at `λ_{i+1}`; it measures how well the solver
//! satisfied the discrete optimality system.

use thiserror::Error;

use crate::focp::{AugmentedSystem, ProblemError};
use crate::optim::SolveReport;
use crate::transcribe::{Grid, Mode};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("costates need the defect multipliers of a full-mode solve")]
    NeedsFullMode,
    #[error("expected {expected} multipliers, got {got}")]
    MultiplierCount { expected: usize, got: usize },
    #[error("state or costate has the wrong dimension")]
    Dimension,
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Hamiltonian of the augmented problem; `v = [V_2..V_K]`, `lambda = [λ_1..λ_K]`.
pub fn hamiltonian(
    aug: &AugmentedSystem,
    t: f64,
    x: f64,
    v: &[f64],
    lambda: &[f64],
    u: f64,
) -> Result<f64, DiagnosticsError> {
    check_dims(aug, v, lambda)?;
    let mut h = aug.cost(t, x, u)? + lambda[0] * aug.rhs(t, x, v, u)?;
    for p in 2..=aug.truncation() {
        h += lambda[p - 1] * aug.moment_rhs(p, t, x);
    }
    Ok(h)
}

/// Partial derivatives of the Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianPartials {
    pub du: f64,
    pub dx: f64,
    /// `∂H/∂V_p` for `p = 2..=K`.
    pub dv: Vec<f64>,
}

impl HamiltonianPartials {
    /// `∂H/∂s_c` with `s = (x, V_2, ..., V_K)`.
    pub fn state(&self, c: usize) -> f64 {
        if c == 0 {
            self.dx
        } else {
            self.dv[c - 1]
        }
    }
}

pub fn hamiltonian_partials(
    aug: &AugmentedSystem,
    t: f64,
    x: f64,
    v: &[f64],
    lambda: &[f64],
    u: f64,
) -> Result<HamiltonianPartials, DiagnosticsError> {
    partials_split(aug, t, t, x, v, lambda, u)
}

// `t_cost` for L, `t_dyn` for F and the moment terms; they differ only on
// the first step of a start-offset grid.
fn partials_split(
    aug: &AugmentedSystem,
    t_cost: f64,
    t_dyn: f64,
    x: f64,
    v: &[f64],
    lambda: &[f64],
    u: f64,
) -> Result<HamiltonianPartials, DiagnosticsError> {
    check_dims(aug, v, lambda)?;
    let cost = aug.cost_partials(t_cost, x, u)?;
    let rhs = aug.rhs_partials(t_dyn, x, v, u)?;
    let mut dx = cost.dx + lambda[0] * rhs.dx;
    for p in 2..=aug.truncation() {
        dx += lambda[p - 1] * (1.0 - p as f64) * aug.moment_weight(p, t_dyn);
    }
    Ok(HamiltonianPartials {
        du: cost.du + lambda[0] * rhs.du,
        dx,
        dv: rhs.dv.iter().map(|d| lambda[0] * d).collect(),
    })
}

fn check_dims(aug: &AugmentedSystem, v: &[f64], lambda: &[f64]) -> Result<(), DiagnosticsError> {
    let k = aug.truncation();
    if v.len() + 1 != k || lambda.len() != k {
        return Err(DiagnosticsError::Dimension);
    }
    Ok(())
}

/// How well a direct solution satisfies the Pontryagin conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct PontryaginReport {
    /// `max_i |∂H/∂u|` over nodes `0..n-1`.
    pub stationarity_residual: f64,
    /// `max_i max_c |(λ_c(t_{i+1}) - λ_c(t_i))/Δt + ∂H/∂s_c(λ(t_{i+1}))|`
    /// over nodes `1..n-1`.
    pub costate_defect: f64,
    /// `λ_1(b), ..., λ_K(b)`. All should vanish when `x(b)` is free; with a
    /// fixed endpoint `λ_1(b)` is unconstrained.
    pub transversality: Vec<f64>,
    pub free_endpoint: bool,
    /// `costates[i][c]`, nodes `0..=n`.
    pub costates: Vec<Vec<f64>>,
}

impl PontryaginReport {
    /// Largest `|λ_c(b)|` among the components that must vanish.
    pub fn transversality_residual(&self) -> f64 {
        let skip = usize::from(!self.free_endpoint);
        self.transversality.iter().skip(skip).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Costates from defect multipliers, nodes `0..=n`.
pub fn costates_from_multipliers(
    k: usize,
    n: usize,
    multipliers: &[f64],
) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(n + 1);
    for i in 1..=n {
        out.push((0..k).map(|c| -multipliers[c * n + (i - 1)]).collect::<Vec<f64>>());
    }
    let first = out[0].clone();
    out.insert(0, first);
    out
}

/// Evaluate the certificate at a full-mode solution.
pub fn pontryagin_check(
    aug: &AugmentedSystem,
    grid: &Grid,
    report: &SolveReport,
    multipliers: &[f64],
) -> Result<PontryaginReport, DiagnosticsError> {
    if report.mode != Mode::Full {
        return Err(DiagnosticsError::NeedsFullMode);
    }
    let k = aug.truncation();
    let n = grid.n();
    let free_endpoint = aug.focp().x_b().is_none();
    let expected = k * n + usize::from(!free_endpoint);
    if multipliers.len() != expected {
        return Err(DiagnosticsError::MultiplierCount { expected, got: multipliers.len() });
    }
    let traj = &report.trajectory;
    if traj.x.len() != n + 1 || traj.truncation() != k {
        return Err(DiagnosticsError::Dimension);
    }
    let costates = costates_from_multipliers(k, n, multipliers);
    let dt = grid.dt();

    let mut stationarity: f64 = 0.0;
    let mut defect: f64 = 0.0;
    for i in 0..n {
        let s = traj.state(i);
        let (tc, td) = (grid.t(i), grid.eval_time(i));
        let hp = partials_split(aug, tc, td, s[0], &s[1..], &costates[i], traj.u[i])?;
        stationarity = stationarity.max(hp.du.abs());
        if i >= 1 {
            let ahead = partials_split(aug, tc, td, s[0], &s[1..], &costates[i + 1], traj.u[i])?;
            for c in 0..k {
                let rate = (costates[i + 1][c] - costates[i][c]) / dt;
                defect = defect.max((rate + ahead.state(c)).abs());
            }
        }
    }
    Ok(PontryaginReport {
        stationarity_residual: stationarity,
        costate_defect: defect,
        transversality: costates[n].clone(),
        free_endpoint,
        costates,
    })
}
