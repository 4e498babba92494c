//! Equality-constrained nonlinear programming.
//!
//! Method of multipliers: the outer loop minimizes the augmented Lagrangian
//!
//! ```text
//! L_A(z; λ, ρ) = f(z) + λ·c(z) + (ρ/2) |c(z)|²
//! ```
//!
//! with projected L-BFGS, then sets `λ ← λ + ρ c(z)` and multiplies `ρ` by
//! `penalty_growth` whenever the constraint violation failed to drop below a
//! quarter of its previous value. Optional box bounds apply to the controls.
//!
//! The constraint Jacobian is equilibrated once, at the starting point:
//! variables are divided by their column norm (when it exceeds one) and each
//! constraint row is then normalized. The inner iterations and the reported
//! first-order residual use the scaled variables; multipliers and constraint
//! violations are reported unscaled.
//!
//! Everything is deterministic: same inputs, same floating-point operations.

mod band;
mod lbfgs;

use thiserror::Error;

use crate::transcribe::{DiscreteNlp, Mode, TranscribeError, Trajectory};

use band::{rcm_order, BandSystem, Rows};
use lbfgs::{dot, projected_gradient_norm, InnerSettings, Metric, Sample, ScaledIdentity};

/// A smooth objective with smooth equality constraints `c(z) = 0`.
pub trait ConstrainedProblem {
    type Error: std::fmt::Display;

    fn dim(&self) -> usize;

    fn num_constraints(&self) -> usize;

    /// Objective and constraint values.
    fn evaluate(&self, z: &[f64]) -> Result<(f64, Vec<f64>), Self::Error>;

    /// `sigma ∇f(z) + J(z)^T w`.
    fn weighted_gradient(&self, z: &[f64], sigma: f64, w: &[f64]) -> Result<Vec<f64>, Self::Error>;
}

impl ConstrainedProblem for DiscreteNlp {
    type Error = TranscribeError;

    fn dim(&self) -> usize {
        DiscreteNlp::dim(self)
    }

    fn num_constraints(&self) -> usize {
        DiscreteNlp::num_constraints(self)
    }

    fn evaluate(&self, z: &[f64]) -> Result<(f64, Vec<f64>), TranscribeError> {
        DiscreteNlp::evaluate(self, z)
    }

    fn weighted_gradient(&self, z: &[f64], sigma: f64, w: &[f64]) -> Result<Vec<f64>, TranscribeError> {
        DiscreteNlp::weighted_gradient(self, z, sigma, w)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("invalid solver options: {0}")]
    InvalidOptions(&'static str),
    #[error("starting point has {expected} entries expected, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("objective or constraints undefined at the starting point: {0}")]
    InitialPoint(String),
    #[error("non-finite objective at the starting point")]
    NonFiniteStart,
}

/// Solver settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveOptions {
    /// Target for `max |c(z)|`.
    pub outer_tol: f64,
    /// Target for the projected gradient of the augmented Lagrangian.
    pub inner_tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub penalty_init: f64,
    pub penalty_growth: f64,
    /// Box `[lo, hi]` applied to every control.
    pub u_bounds: Option<(f64, f64)>,
    /// Number of correction pairs kept by L-BFGS.
    pub memory: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-8,
            inner_tol: 1e-8,
            max_outer: 50,
            max_inner: 500,
            penalty_init: 10.0,
            penalty_growth: 10.0,
            u_bounds: None,
            memory: 10,
        }
    }
}

impl SolveOptions {
    pub fn validate(&self) -> Result<(), OptimError> {
        if !(self.outer_tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(OptimError::InvalidOptions("tolerances must be positive"));
        }
        if !(self.penalty_growth > 1.0) {
            return Err(OptimError::InvalidOptions("penalty_growth must exceed 1"));
        }
        if !(self.penalty_init > 0.0) {
            return Err(OptimError::InvalidOptions("penalty_init must be positive"));
        }
        if self.max_outer == 0 || self.max_inner == 0 || self.memory == 0 {
            return Err(OptimError::InvalidOptions("iteration limits and memory must be positive"));
        }
        if let Some((lo, hi)) = self.u_bounds {
            if !(lo <= hi) {
                return Err(OptimError::InvalidOptions("u_bounds must satisfy lo <= hi"));
            }
        }
        Ok(())
    }
}

/// Outcome of [`minimize`].
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub z: Vec<f64>,
    pub objective: f64,
    pub constraints: Vec<f64>,
    /// Final multiplier estimates `λ`, so that `∇f + J^T λ ≈ 0`.
    pub multipliers: Vec<f64>,
    pub max_constraint_violation: f64,
    pub first_order_residual: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
}

const MAX_PENALTY: f64 = 1e12;

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Diagonal scaling: the solver works with `y = z / var` and the
/// constraints `con ⊙ c`.
struct Scaling {
    var: Vec<f64>,
    con: Vec<f64>,
}

// Rows of the constraint Jacobian as `J^T e_r`, zero entries dropped.
fn jacobian_rows<P: ConstrainedProblem>(problem: &P, z: &[f64]) -> Option<Rows> {
    let m = problem.num_constraints();
    let mut rows = Vec::with_capacity(m);
    let mut e = vec![0.0; m];
    for r in 0..m {
        e[r] = 1.0;
        let row = problem.weighted_gradient(z, 0.0, &e).ok()?;
        e[r] = 0.0;
        if row.iter().any(|v| !v.is_finite()) {
            return None;
        }
        rows.push(row.into_iter().enumerate().filter(|&(_, v)| v != 0.0).collect());
    }
    Some(rows)
}

// Columns are shrunk to unit norm (never enlarged), then rows of the
// column-scaled Jacobian are brought to unit max-norm.
fn equilibrate(dim: usize, rows: Option<&Rows>) -> Scaling {
    let Some(rows) = rows else {
        return Scaling { var: vec![1.0; dim], con: Vec::new() };
    };
    let mut sq = vec![0.0; dim];
    for &(j, v) in rows.iter().flatten() {
        sq[j] += v * v;
    }
    let var: Vec<f64> = sq.iter().map(|&q| if q > 1.0 { 1.0 / q.sqrt() } else { 1.0 }).collect();
    let con = rows
        .iter()
        .map(|row| {
            let big = row.iter().fold(0.0, |acc: f64, &(j, v)| acc.max((v * var[j]).abs()));
            if big > 0.0 {
                1.0 / big
            } else {
                1.0
            }
        })
        .collect();
    Scaling { var, con }
}

/// `H0 = (μ I + ρ J̃ᵀJ̃)⁻¹` with `J̃` the scaled Jacobian at the start of the
/// round; `μ` tracks the curvature the penalty term does not explain.
struct PenaltyMetric {
    sys: BandSystem,
}

impl PenaltyMetric {
    // Only worth it when the ordered Gram matrix is narrow.
    fn build(dim: usize, rows: &Rows, scaling: &Scaling, rho: f64) -> Option<Self> {
        if rows.is_empty() {
            return None;
        }
        let limit = (16.0 * dim as f64).sqrt() as usize;
        if rows.iter().any(|r| r.len() > limit + 1) {
            return None;
        }
        let scaled: Rows = rows
            .iter()
            .zip(&scaling.con)
            .map(|(row, r)| row.iter().map(|&(j, v)| (j, r * v * scaling.var[j])).collect())
            .collect();
        let (perm, band) = rcm_order(dim, &scaled);
        if band > limit {
            return None;
        }
        Some(PenaltyMetric { sys: BandSystem::new(dim, &scaled, perm, band, rho) })
    }
}

impl Metric for PenaltyMetric {
    fn penalty_mu(&self) -> Option<f64> {
        Some(self.sys.mu())
    }

    fn apply(&mut self, q: &mut [f64], newest: Option<(&[f64], &[f64])>) {
        if let Some((s, y)) = newest {
            let rest = (dot(s, y) - self.sys.penalty_curvature(s)) / dot(s, s);
            if rest.is_finite() && rest > 0.0 {
                self.sys.set_mu(rest.clamp(1e-10, 1e10));
            }
        }
        let keep = q.to_vec();
        if !self.sys.solve(q) {
            q.copy_from_slice(&keep);
            ScaledIdentity.apply(q, newest);
        }
    }
}

/// Method of multipliers on a generic problem.
///
/// `bounds` holds one `(lo, hi)` pair per variable. Non-convergence is
/// reported through [`Minimum::converged`], not as an error.
pub fn minimize<P: ConstrainedProblem>(
    problem: &P,
    z0: Vec<f64>,
    bounds: &[(f64, f64)],
    opts: &SolveOptions,
) -> Result<Minimum, OptimError> {
    opts.validate()?;
    let dim = problem.dim();
    if z0.len() != dim || bounds.len() != dim {
        return Err(OptimError::Dimension { expected: dim, got: z0.len() });
    }
    let m = problem.num_constraints();
    let mut z = z0;
    lbfgs::project(&mut z, bounds);

    let (f0, c0) = problem.evaluate(&z).map_err(|e| OptimError::InitialPoint(e.to_string()))?;
    if !f0.is_finite() || c0.iter().any(|c| !c.is_finite()) {
        return Err(OptimError::NonFiniteStart);
    }

    let scaling = equilibrate(dim, jacobian_rows(problem, &z).as_ref());
    let con = if scaling.con.len() == m { scaling.con.clone() } else { vec![1.0; m] };
    let var = scaling.var.clone();
    let scaling = Scaling { var: var.clone(), con: con.clone() };
    let mut mu = 1.0;
    let to_z = |y: &[f64]| -> Vec<f64> { y.iter().zip(&var).map(|(a, b)| a * b).collect() };
    let ybounds: Vec<(f64, f64)> = bounds.iter().zip(&var).map(|(&(lo, hi), s)| (lo / s, hi / s)).collect();
    let mut y: Vec<f64> = z.iter().zip(&var).map(|(a, b)| a / b).collect();

    // multipliers of the scaled constraints
    let mut lambda = vec![0.0; m];
    let mut rho = opts.penalty_init;
    let mut prev_violation = f64::INFINITY;
    let mut inner_total = 0;
    let mut outer = 0;
    let mut objective = f0;
    let mut constraints = c0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let settings = InnerSettings { tol: opts.inner_tol, max_iter: opts.max_inner, memory: opts.memory };

    while outer < opts.max_outer {
        outer += 1;
        // merit with the multipliers and penalty frozen for this round
        let lam = lambda.clone();
        let merit = |y: &[f64]| -> Option<Sample> {
            let z = to_z(y);
            let (f, c) = problem.evaluate(&z).ok()?;
            let mut value = f;
            let mut w = Vec::with_capacity(m);
            for ((&ci, &li), &r) in c.iter().zip(&lam).zip(&con) {
                let cs = r * ci;
                value += li * cs + 0.5 * rho * cs * cs;
                w.push(r * (li + rho * cs));
            }
            if !value.is_finite() {
                return None;
            }
            let mut grad = problem.weighted_gradient(&z, 1.0, &w).ok()?;
            if grad.iter().any(|g| !g.is_finite()) {
                return None;
            }
            grad.iter_mut().zip(&var).for_each(|(g, s)| *g *= s);
            Some(Sample { value, grad })
        };
        let Some(start) = merit(&y) else {
            break;
        };
        let mut metric: Box<dyn Metric> = match jacobian_rows(problem, &z)
            .and_then(|rows| PenaltyMetric::build(dim, &rows, &scaling, rho))
        {
            Some(mut pm) => {
                pm.sys.set_mu(mu);
                Box::new(pm)
            }
            None => Box::new(ScaledIdentity),
        };
        let out = lbfgs::minimize(merit, start, y.clone(), &ybounds, &settings, metric.as_mut());
        if let Some(m) = metric.penalty_mu() {
            mu = m;
        }
        inner_total += out.iterations;
        y = out.z;
        z = to_z(&y);
        let (f, c) = problem.evaluate(&z).map_err(|e| OptimError::InitialPoint(e.to_string()))?;
        objective = f;
        let violation = max_abs(&c);
        let scaled_violation = c.iter().zip(&con).fold(0.0, |acc: f64, (ci, r)| acc.max((ci * r).abs()));
        for ((li, &ci), &r) in lambda.iter_mut().zip(&c).zip(&con) {
            *li += rho * r * ci;
        }
        constraints = c;
        // with λ updated, the merit gradient at y is the scaled ∇f + J^T λ
        residual = projected_gradient_norm(&y, &out.grad, &ybounds);
        if violation <= opts.outer_tol && out.converged && residual <= opts.inner_tol {
            converged = true;
            break;
        }
        if m > 0 && scaled_violation > 0.25 * prev_violation {
            rho = (rho * opts.penalty_growth).min(MAX_PENALTY);
        }
        prev_violation = scaled_violation;
    }
    let multipliers = lambda.iter().zip(&con).map(|(l, r)| l * r).collect();

    Ok(Minimum {
        max_constraint_violation: max_abs(&constraints),
        z,
        objective,
        constraints,
        multipliers,
        first_order_residual: residual,
        inner_iterations: inner_total,
        outer_iterations: outer,
        converged,
    })
}

/// Result of solving a transcribed control problem.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub mode: Mode,
    pub trajectory: Trajectory,
    pub objective: f64,
    pub max_constraint_violation: f64,
    pub first_order_residual: f64,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
    pub converged: bool,
    /// Constraint multipliers in the program's constraint order.
    pub multipliers: Vec<f64>,
    pub decision: Vec<f64>,
}

/// Solve a transcribed problem from the zero-control starting point.
pub fn solve(nlp: &DiscreteNlp, opts: &SolveOptions) -> Result<SolveReport, OptimError> {
    opts.validate()?;
    let z0 = nlp.initial_point().map_err(|e| OptimError::InitialPoint(e.to_string()))?;
    solve_from(nlp, z0, opts)
}

/// Solve a transcribed problem from a caller-supplied decision vector.
pub fn solve_from(nlp: &DiscreteNlp, z0: Vec<f64>, opts: &SolveOptions) -> Result<SolveReport, OptimError> {
    let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); nlp.dim()];
    if let Some(b) = opts.u_bounds {
        for slot in &mut bounds[nlp.control_range()] {
            *slot = b;
        }
    }
    let min = minimize(nlp, z0, &bounds, opts)?;
    let trajectory = nlp.trajectory(&min.z).map_err(|e| OptimError::InitialPoint(e.to_string()))?;
    Ok(SolveReport {
        mode: nlp.mode(),
        trajectory,
        objective: min.objective,
        max_constraint_violation: min.max_constraint_violation,
        first_order_residual: min.first_order_residual,
        inner_iterations: min.inner_iterations,
        outer_iterations: min.outer_iterations,
        converged: min.converged,
        multipliers: min.multipliers,
        decision: min.z,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Quadratic objective `½|z - target|²` with linear constraints `A z = b`.
    struct Qp {
        target: Vec<f64>,
        rows: Vec<(Vec<f64>, f64)>,
    }

    impl ConstrainedProblem for Qp {
        type Error = String;

        fn dim(&self) -> usize {
            self.target.len()
        }

        fn num_constraints(&self) -> usize {
            self.rows.len()
        }

        fn evaluate(&self, z: &[f64]) -> Result<(f64, Vec<f64>), String> {
            let f = 0.5 * z.iter().zip(&self.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
            let c = self.rows.iter().map(|(a, b)| a.iter().zip(z).map(|(x, y)| x * y).sum::<f64>() - b).collect();
            Ok((f, c))
        }

        fn weighted_gradient(&self, z: &[f64], sigma: f64, w: &[f64]) -> Result<Vec<f64>, String> {
            let mut g: Vec<f64> = z.iter().zip(&self.target).map(|(a, b)| sigma * (a - b)).collect();
            for ((row, _), wi) in self.rows.iter().zip(w) {
                for (gi, ai) in g.iter_mut().zip(row) {
                    *gi += wi * ai;
                }
            }
            Ok(g)
        }
    }

    fn free(n: usize) -> Vec<(f64, f64)> {
        vec![(f64::NEG_INFINITY, f64::INFINITY); n]
    }

    #[test]
    fn unconstrained_quadratic_in_few_iterations() {
        let target = vec![1.0, -2.0, 3.5, 0.25];
        let qp = Qp { target: target.clone(), rows: vec![] };
        let min = minimize(&qp, vec![0.0; 4], &free(4), &SolveOptions::default()).unwrap();
        assert!(min.converged);
        assert!(min.inner_iterations <= 3);
        for (a, b) in min.z.iter().zip(&target) {
            assert!((a - b).abs() <= 1e-8);
        }
    }

    #[test]
    fn equality_constrained_qp() {
        // min z1² + z2² s.t. z1 + z2 = 1
        let qp = Qp { target: vec![0.0, 0.0], rows: vec![(vec![1.0, 1.0], 1.0)] };
        let opts = SolveOptions::default();
        let min = minimize(&qp, vec![0.0, 0.0], &free(2), &opts).unwrap();
        assert!(min.converged);
        assert_relative_eq!(min.z[0], 0.5, epsilon = 1e-8);
        assert_relative_eq!(min.z[1], 0.5, epsilon = 1e-8);
        // KKT: z + λ (1, 1) = 0
        assert_relative_eq!(min.multipliers[0], -0.5, epsilon = 1e-7);
        assert!(min.max_constraint_violation <= opts.outer_tol);
        assert!(min.first_order_residual <= 10.0 * opts.inner_tol);
    }

    #[test]
    fn bounds_respected() {
        // min ½|z - (3, 3)|² s.t. z1 - z2 = 0, z in [0, 1]²
        let qp = Qp { target: vec![3.0, 3.0], rows: vec![(vec![1.0, -1.0], 0.0)] };
        let min = minimize(&qp, vec![0.2, 0.1], &[(0.0, 1.0), (0.0, 1.0)], &SolveOptions::default()).unwrap();
        assert!(min.converged);
        assert_relative_eq!(min.z[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(min.z[1], 1.0, epsilon = 1e-8);
    }

    #[test]
    fn infeasible_reports_non_convergence() {
        let qp = Qp {
            target: vec![0.0],
            rows: vec![(vec![1.0], 1.0), (vec![1.0], -1.0)],
        };
        let opts = SolveOptions { max_outer: 8, ..SolveOptions::default() };
        let min = minimize(&qp, vec![0.0], &free(1), &opts).unwrap();
        assert!(!min.converged);
        assert_eq!(min.outer_iterations, 8);
    }

    #[test]
    fn deterministic() {
        let qp = Qp { target: vec![0.3, -0.7, 1.1], rows: vec![(vec![1.0, 2.0, -1.0], 0.4)] };
        let a = minimize(&qp, vec![0.0; 3], &free(3), &SolveOptions::default()).unwrap();
        let b = minimize(&qp, vec![0.0; 3], &free(3), &SolveOptions::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn option_validation() {
        let bad = SolveOptions { penalty_growth: 1.0, ..SolveOptions::default() };
        assert!(bad.validate().is_err());
        let bad = SolveOptions { outer_tol: 0.0, ..SolveOptions::default() };
        assert!(bad.validate().is_err());
        let bad = SolveOptions { u_bounds: Some((1.0, 0.0)), ..SolveOptions::default() };
        assert!(bad.validate().is_err());
    }
}
