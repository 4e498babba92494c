//! Fractional optimal control problems and their integer-order surrogate.
//!
//! A [`Focp`] minimizes `∫_a^b L(t, x, u) dt` subject to
//! `M x' + N ᶜD^α x = f(t, x, u)` and `x(a) = x_a`, with `x(b)` fixed or free.
//! [`build_augmented`] replaces the Caputo derivative by the moment expansion,
//! which turns the constraint into the explicit system
//!
//! ```text
//! x'   = F(t, x, V, u)
//! V_p' = (1-p)(t-a)^(p-2) x          p = 2..K
//! ```
//!
//! with
//!
//! ```text
//!         f - N A τ^-α x + Σ N C_p τ^(1-p-α) V_p + N x_a τ^-α / Γ(1-α)
//! F  =  ---------------------------------------------------------------,  τ = t - a.
//!                           M + N B τ^(1-α)
//! ```

pub mod expr;

use thiserror::Error;

use crate::fracops::{gamma, FracError, FractionalOrder};
use crate::momentexp::{coefficients, MomentError, MomentScheme};

pub use expr::{diff_expr, parse_expr, DiffError, EvalError, Expr, ParseError, Point, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("M and N cannot both be zero")]
    DegenerateWeights,
    #[error("interval end b = {b} must exceed a = {a}")]
    EmptyInterval { a: f64, b: f64 },
    #[error("non-finite problem data: {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Order(#[from] FracError),
    #[error(transparent)]
    Moment(#[from] MomentError),
    #[error("denominator M + N B (t-a)^(1-alpha) vanishes at t = {t}")]
    DegenerateDenominator { t: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("non-finite value of F at t = {t}")]
    NonFiniteRhs { t: f64 },
}

/// A fractional optimal control problem with scalar state and control.
#[derive(Debug, Clone, PartialEq)]
pub struct Focp {
    alpha: FractionalOrder,
    m_dot: f64,
    n_frac: f64,
    a: f64,
    b: f64,
    x_a: f64,
    x_b: Option<f64>,
    running_cost: Expr,
    dynamics: Expr,
}

impl Focp {
    /// `m_dot` and `n_frac` weight `x'` and the Caputo derivative in the
    /// dynamic constraint. `x_b = None` leaves the final state free.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        alpha: f64,
        m_dot: f64,
        n_frac: f64,
        a: f64,
        b: f64,
        x_a: f64,
        x_b: Option<f64>,
        running_cost: Expr,
        dynamics: Expr,
    ) -> Result<Self, ProblemError> {
        let alpha = FractionalOrder::solver(alpha)?;
        for (v, what) in [(m_dot, "M"), (n_frac, "N"), (a, "a"), (b, "b"), (x_a, "x_a")] {
            if !v.is_finite() {
                return Err(ProblemError::NonFinite(what));
            }
        }
        if x_b.is_some_and(|v| !v.is_finite()) {
            return Err(ProblemError::NonFinite("x_b"));
        }
        if m_dot == 0.0 && n_frac == 0.0 {
            return Err(ProblemError::DegenerateWeights);
        }
        if !(b > a) {
            return Err(ProblemError::EmptyInterval { a, b });
        }
        Ok(Self { alpha, m_dot, n_frac, a, b, x_a, x_b, running_cost, dynamics })
    }

    /// Parse `L` and `f` from text and build the problem.
    #[allow(clippy::too_many_arguments)]
    pub fn from_text(
        alpha: f64,
        m_dot: f64,
        n_frac: f64,
        a: f64,
        b: f64,
        x_a: f64,
        x_b: Option<f64>,
        running_cost: &str,
        dynamics: &str,
    ) -> Result<Self, FocpTextError> {
        let l = parse_expr(running_cost).map_err(FocpTextError::RunningCost)?;
        let f = parse_expr(dynamics).map_err(FocpTextError::Dynamics)?;
        Ok(Self::new(alpha, m_dot, n_frac, a, b, x_a, x_b, l, f)?)
    }

    pub fn alpha(&self) -> FractionalOrder {
        self.alpha
    }

    pub fn m_dot(&self) -> f64 {
        self.m_dot
    }

    pub fn n_frac(&self) -> f64 {
        self.n_frac
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn x_a(&self) -> f64 {
        self.x_a
    }

    pub fn x_b(&self) -> Option<f64> {
        self.x_b
    }

    pub fn running_cost(&self) -> &Expr {
        &self.running_cost
    }

    pub fn dynamics(&self) -> &Expr {
        &self.dynamics
    }

    /// Same problem with the final state released.
    pub fn with_free_endpoint(mut self) -> Self {
        self.x_b = None;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FocpTextError {
    #[error("in L: {0}")]
    RunningCost(ParseError),
    #[error("in f: {0}")]
    Dynamics(ParseError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

/// Value and first partials of the right-hand side `F`.
#[derive(Debug, Clone, PartialEq)]
pub struct RhsPartials {
    pub value: f64,
    pub dx: f64,
    pub du: f64,
    /// `∂F/∂V_p` for `p = 2..=K`.
    pub dv: Vec<f64>,
}

/// Value and partials of the running cost `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostPartials {
    pub value: f64,
    pub dx: f64,
    pub du: f64,
}

/// The integer-order system obtained from a [`Focp`] and a truncation `K`.
#[derive(Debug, Clone)]
pub struct AugmentedSystem {
    scheme: MomentScheme,
    focp: Focp,
    inv_gamma_1ma: f64,
    f_dx: Expr,
    f_du: Expr,
    l_dx: Expr,
    l_du: Expr,
}

/// Build the augmented system for truncation `k`.
///
/// Fails if the denominator `M + N B (t-a)^(1-α)` has a root in `(a, b]`.
/// A root at `t = a` itself (the case `M = 0`) is accepted here; the Euler
/// grid then has to step around the left endpoint.
pub fn build_augmented(problem: &Focp, k: usize) -> Result<AugmentedSystem, ProblemError> {
    let scheme = coefficients(problem.alpha, k)?;
    let al = problem.alpha.value();
    let (m, n) = (problem.m_dot, problem.n_frac);
    // τ ↦ M + N B τ^(1-α) is monotone, so its only possible root is closed form
    let nb = n * scheme.b();
    if nb != 0.0 && m != 0.0 {
        let ratio = -m / nb;
        if ratio > 0.0 {
            let tau = ratio.powf(1.0 / (1.0 - al));
            if tau <= problem.b - problem.a {
                return Err(ProblemError::DegenerateDenominator { t: problem.a + tau });
            }
        }
    } else if m == 0.0 && nb == 0.0 {
        return Err(ProblemError::DegenerateDenominator { t: problem.a });
    }
    Ok(AugmentedSystem {
        inv_gamma_1ma: 1.0 / gamma(1.0 - al)?,
        f_dx: diff_expr(&problem.dynamics, Var::X)?,
        f_du: diff_expr(&problem.dynamics, Var::U)?,
        l_dx: diff_expr(&problem.running_cost, Var::X)?,
        l_du: diff_expr(&problem.running_cost, Var::U)?,
        scheme,
        focp: problem.clone(),
    })
}

impl AugmentedSystem {
    pub fn scheme(&self) -> &MomentScheme {
        &self.scheme
    }

    pub fn focp(&self) -> &Focp {
        &self.focp
    }

    /// State dimension: `x` plus `V_2..V_K`.
    pub fn state_dim(&self) -> usize {
        self.scheme.truncation()
    }

    pub fn truncation(&self) -> usize {
        self.scheme.truncation()
    }

    pub fn denominator(&self, t: f64) -> f64 {
        let tau = t - self.focp.a;
        let al = self.focp.alpha.value();
        self.focp.m_dot + self.focp.n_frac * self.scheme.b() * tau.max(0.0).powf(1.0 - al)
    }

    /// Right-hand side `F(t, x, V, u)` with `v = [V_2, ..., V_K]`.
    ///
    /// At `t = a` the singular groups are taken jointly as zero, giving
    /// `f(a, x, u) / M`.
    pub fn rhs(&self, t: f64, x: f64, v: &[f64], u: f64) -> Result<f64, ProblemError> {
        let f = self.focp.dynamics.eval(t, x, u)?;
        self.assemble(t, x, v, f)
    }

    fn assemble(&self, t: f64, x: f64, v: &[f64], f: f64) -> Result<f64, ProblemError> {
        debug_assert_eq!(v.len() + 1, self.truncation());
        let tau = t - self.focp.a;
        let (m, n) = (self.focp.m_dot, self.focp.n_frac);
        let value = if tau <= 0.0 {
            if m == 0.0 {
                return Err(ProblemError::DegenerateDenominator { t });
            }
            f / m
        } else {
            let al = self.focp.alpha.value();
            let tma = tau.powf(-al);
            let mut num = f - n * self.scheme.a() * tma * x + n * self.focp.x_a * tma * self.inv_gamma_1ma;
            for (p, (&c, &vp)) in (2..).zip(self.scheme.c_all().iter().zip(v)) {
                num += n * c * tau.powf(1.0 - p as f64 - al) * vp;
            }
            let den = self.denominator(t);
            if den == 0.0 {
                return Err(ProblemError::DegenerateDenominator { t });
            }
            num / den
        };
        if !value.is_finite() {
            return Err(ProblemError::NonFiniteRhs { t });
        }
        Ok(value)
    }

    /// `F` together with its partials in `x`, `u` and each `V_p`.
    pub fn rhs_partials(&self, t: f64, x: f64, v: &[f64], u: f64) -> Result<RhsPartials, ProblemError> {
        let f = self.focp.dynamics.eval(t, x, u)?;
        let value = self.assemble(t, x, v, f)?;
        let fx = self.f_dx.eval(t, x, u)?;
        let fu = self.f_du.eval(t, x, u)?;
        let tau = t - self.focp.a;
        let k = self.truncation();
        if tau <= 0.0 {
            let m = self.focp.m_dot;
            return Ok(RhsPartials { value, dx: fx / m, du: fu / m, dv: vec![0.0; k - 1] });
        }
        let al = self.focp.alpha.value();
        let n = self.focp.n_frac;
        let den = self.denominator(t);
        let dx = (fx - n * self.scheme.a() * tau.powf(-al)) / den;
        let dv = (2..=k)
            .map(|p| n * self.scheme.c(p) * tau.powf(1.0 - p as f64 - al) / den)
            .collect();
        Ok(RhsPartials { value, dx, du: fu / den, dv })
    }

    /// `V_p' = (1-p)(t-a)^(p-2) x`, with `0^0 = 1` for `p = 2`.
    pub fn moment_rhs(&self, p: usize, t: f64, x: f64) -> f64 {
        (1.0 - p as f64) * self.moment_weight(p, t) * x
    }

    /// `(t-a)^(p-2)`, the factor multiplying `(1-p) x` in the moment equation.
    pub fn moment_weight(&self, p: usize, t: f64) -> f64 {
        let tau = (t - self.focp.a).max(0.0);
        tau.powi(p as i32 - 2)
    }

    pub fn cost(&self, t: f64, x: f64, u: f64) -> Result<f64, ProblemError> {
        Ok(self.focp.running_cost.eval(t, x, u)?)
    }

    pub fn cost_partials(&self, t: f64, x: f64, u: f64) -> Result<CostPartials, ProblemError> {
        Ok(CostPartials {
            value: self.focp.running_cost.eval(t, x, u)?,
            dx: self.l_dx.eval(t, x, u)?,
            du: self.l_du.eval(t, x, u)?,
        })
    }

    /// `∂f/∂x` and `∂f/∂u` of the original dynamics.
    pub fn dynamics_partials(&self, t: f64, x: f64, u: f64) -> Result<(f64, f64), ProblemError> {
        Ok((self.f_dx.eval(t, x, u)?, self.f_du.eval(t, x, u)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    pub(crate) fn quadratic_target() -> Focp {
        Focp::from_text(0.5, 1.0, 1.0, 0.0, 1.0, 0.0, Some(1.0), "(u^2 - 4*x)^2", "u + 2/gamma(2.5) * t^1.5")
            .unwrap()
    }

    #[test]
    fn validation() {
        let l = parse_expr("u^2").unwrap();
        let f = parse_expr("u").unwrap();
        let mk = |alpha, m, n, a, b| Focp::new(alpha, m, n, a, b, 0.0, None, l.clone(), f.clone());
        assert!(matches!(mk(0.5, 0.0, 0.0, 0.0, 1.0), Err(ProblemError::DegenerateWeights)));
        assert!(matches!(mk(0.5, 1.0, 1.0, 1.0, 1.0), Err(ProblemError::EmptyInterval { .. })));
        assert!(matches!(mk(1.0, 1.0, 1.0, 0.0, 1.0), Err(ProblemError::Order(_))));
        assert!(matches!(mk(0.5, f64::NAN, 1.0, 0.0, 1.0), Err(ProblemError::NonFinite("M"))));
        assert!(mk(0.5, 1.0, 0.0, 0.0, 1.0).is_ok());
        assert!(matches!(
            Focp::from_text(0.5, 1.0, 1.0, 0.0, 1.0, 0.0, None, "u^", "u"),
            Err(FocpTextError::RunningCost(_))
        ));
    }

    #[test]
    fn augmented_rhs_matches_hand_formula() {
        let aug = build_augmented(&quadratic_target(), 3).unwrap();
        let s = aug.scheme();
        let g25 = gamma(2.5).unwrap();
        for &(t, x, v2, v3, u) in &[
            (0.5f64, 0.25, -0.01, -0.003, 1.0),
            (0.01, 0.3, 0.2, -0.1, -2.0),
            (1.0, 1.0, -0.3, -0.2, 2.0),
        ] {
            let direct = (u + 2.0 / g25 * t.powf(1.5) - s.a() * t.powf(-0.5) * x
                + s.c(2) * t.powf(-1.5) * v2
                + s.c(3) * t.powf(-2.5) * v3)
                / (1.0 + s.b() * t.powf(0.5));
            assert_relative_eq!(aug.rhs(t, x, &[v2, v3], u).unwrap(), direct, max_relative = 1e-12);
        }
    }

    #[test]
    fn rhs_at_left_endpoint_uses_limit() {
        let aug = build_augmented(&quadratic_target(), 4).unwrap();
        assert_eq!(aug.rhs(0.0, 0.0, &[0.0, 0.0, 0.0], 0.7).unwrap(), 0.7);
        let p = aug.rhs_partials(0.0, 0.0, &[0.0; 3], 0.7).unwrap();
        assert_eq!((p.dx, p.du), (0.0, 1.0));
        assert!(p.dv.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn classical_problem_recovered_when_n_is_zero() {
        let prob = Focp::from_text(0.3, 2.0, 0.0, 0.0, 2.0, 1.0, None, "u^2", "x*u + sin(t)").unwrap();
        let aug = build_augmented(&prob, 5).unwrap();
        for &(t, x, u) in &[(0.0, 1.0, 0.5), (0.7, -2.0, 3.0), (2.0, 0.1, -1.0)] {
            let f = prob.dynamics().eval(t, x, u).unwrap();
            let v = [0.3, -1.0, 7.0, 2.0];
            assert_eq!(aug.rhs(t, x, &v, u).unwrap(), f / 2.0);
            let p = aug.rhs_partials(t, x, &v, u).unwrap();
            assert!(p.dv.iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn partials_match_finite_differences() {
        let prob = Focp::from_text(0.4, 1.5, 0.8, 0.0, 1.0, 0.2, None, "x^2 + u^2", "sin(x) * u + t").unwrap();
        let aug = build_augmented(&prob, 4).unwrap();
        let (t, x, u) = (0.37, 0.8, -0.4);
        let v = [0.1, -0.05, 0.02];
        let p = aug.rhs_partials(t, x, &v, u).unwrap();
        let h = 1e-6;
        let fx = (aug.rhs(t, x + h, &v, u).unwrap() - aug.rhs(t, x - h, &v, u).unwrap()) / (2.0 * h);
        let fu = (aug.rhs(t, x, &v, u + h).unwrap() - aug.rhs(t, x, &v, u - h).unwrap()) / (2.0 * h);
        assert_relative_eq!(p.dx, fx, max_relative = 1e-7);
        assert_relative_eq!(p.du, fu, max_relative = 1e-7);
        for i in 0..3 {
            let mut vp = v;
            let mut vm = v;
            vp[i] += h;
            vm[i] -= h;
            let fd = (aug.rhs(t, x, &vp, u).unwrap() - aug.rhs(t, x, &vm, u).unwrap()) / (2.0 * h);
            assert_relative_eq!(p.dv[i], fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn degenerate_denominator_detected() {
        // 1 - 1.0 * B * τ^0.5 vanishes inside [0, 100]
        let prob = Focp::from_text(0.5, 1.0, -1.0, 0.0, 100.0, 0.0, None, "u^2", "u").unwrap();
        let aug = build_augmented(&prob, 3);
        let Err(ProblemError::DegenerateDenominator { t }) = aug else {
            panic!("expected degenerate denominator");
        };
        let b = coefficients(prob.alpha(), 3).unwrap().b();
        assert_relative_eq!(1.0 - b * t.sqrt(), 0.0, epsilon = 1e-12);
        // same weights on a short interval are fine
        let short = Focp::from_text(0.5, 1.0, -1.0, 0.0, 1.0, 0.0, None, "u^2", "u").unwrap();
        assert!(build_augmented(&short, 3).is_ok());
    }

    #[test]
    fn zero_m_accepted_but_singular_at_start() {
        let prob = Focp::from_text(0.5, 0.0, 1.0, 0.0, 1.0, 0.0, None, "u^2", "u").unwrap();
        let aug = build_augmented(&prob, 3).unwrap();
        assert!(matches!(aug.rhs(0.0, 0.0, &[0.0, 0.0], 1.0), Err(ProblemError::DegenerateDenominator { .. })));
        assert!(aug.rhs(0.1, 0.0, &[0.0, 0.0], 1.0).unwrap().is_finite());
    }

    #[test]
    fn moment_weight_zero_power_is_one() {
        let aug = build_augmented(&quadratic_target(), 3).unwrap();
        assert_eq!(aug.moment_weight(2, 0.0), 1.0);
        assert_eq!(aug.moment_weight(3, 0.0), 0.0);
        assert_eq!(aug.moment_rhs(3, 0.5, 2.0), -2.0 * 0.5 * 2.0);
    }
}
