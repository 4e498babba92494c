//! Reference fractional operators.
//!
//! Closed-form and classical discretizations of the left-sided Caputo and
//! Riemann–Liouville derivatives. The solver never calls the routines here
//! except `gamma`; they exist so the moment expansion can be checked against
//! methods that share none of its machinery.

mod gamma;

pub use gamma::{digamma, gamma, ln_gamma, trigamma};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FracError {
    #[error("gamma function has a pole at {0}")]
    GammaPole(f64),
    #[error("fractional order {0} is invalid: {1}")]
    InvalidOrder(f64, &'static str),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("invalid sampled function: {0}")]
    InvalidSamples(&'static str),
    #[error("grid index {index} out of range (valid 1..={last})")]
    IndexOutOfRange { index: usize, last: usize },
    #[error("power exponent beta = {beta} must exceed n = {n}")]
    PowerDomain { beta: f64, n: u32 },
    #[error("expression is singular at t = a")]
    SingularAtStart,
}

/// Order of a fractional derivative or integral.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct FractionalOrder(f64);

impl FractionalOrder {
    /// Any finite positive order, for the reference operators.
    pub fn new(alpha: f64) -> Result<Self, FracError> {
        if !alpha.is_finite() {
            return Err(FracError::InvalidOrder(alpha, "must be finite"));
        }
        if alpha <= 0.0 {
            return Err(FracError::InvalidOrder(alpha, "must be positive"));
        }
        Ok(Self(alpha))
    }

    /// An order in the open interval (0, 1), as required by the solver path.
    pub fn solver(alpha: f64) -> Result<Self, FracError> {
        let order = Self::new(alpha)?;
        if alpha >= 1.0 {
            return Err(FracError::InvalidOrder(alpha, "solver requires 0 < alpha < 1"));
        }
        Ok(order)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_solver_order(self) -> bool {
        self.0 < 1.0
    }

    /// Number of classical derivatives the Caputo operator integrates:
    /// `floor(alpha) + 1` for non-integer orders, `alpha` itself otherwise.
    pub fn caputo_n(self) -> u32 {
        if self.0.fract() == 0.0 {
            self.0 as u32
        } else {
            self.0.floor() as u32 + 1
        }
    }
}

/// Samples of a scalar function on a strictly increasing grid.
///
/// The first grid point is the left endpoint `a` of the operators.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
}

impl SampledFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self, FracError> {
        if grid.len() != values.len() {
            return Err(FracError::InvalidSamples("grid and values differ in length"));
        }
        if grid.is_empty() {
            return Err(FracError::InvalidSamples("empty grid"));
        }
        if grid.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(FracError::InvalidSamples("non-finite entry"));
        }
        if grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(FracError::InvalidSamples("grid must be strictly increasing"));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Vec<f64>, f: impl Fn(f64) -> f64) -> Result<Self, FracError> {
        let values = grid.iter().map(|&t| f(t)).collect();
        Self::new(grid, values)
    }

    /// Samples of `f` on `n + 1` equispaced nodes of `[a, b]`.
    pub fn uniform(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self, FracError> {
        if n == 0 || b <= a {
            return Err(FracError::InvalidSamples("need n >= 1 and b > a"));
        }
        let h = (b - a) / n as f64;
        let grid = (0..=n).map(|i| a + i as f64 * h).collect();
        Self::from_fn(grid, f)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }
}

/// Generalized binomial coefficient `binom(alpha, k)`.
///
/// Evaluated as the falling product `alpha (alpha-1) ... (alpha-k+1) / k!`,
/// which equals `(-1)^(k-1) alpha Γ(k-alpha) / (Γ(1-alpha) Γ(k+1))` and takes
/// the pole-cancelling limit automatically when `alpha` is an integer.
pub fn frac_binomial(alpha: f64, k: u32) -> f64 {
    let mut acc = 1.0;
    for j in 0..k {
        acc *= (alpha - j as f64) / (j + 1) as f64;
    }
    acc
}

/// Caputo derivative of `x(t) = (t - a)^(beta - 1)`.
pub fn caputo_power(alpha: FractionalOrder, beta: f64, a: f64, t: f64) -> Result<f64, FracError> {
    let n = alpha.caputo_n();
    if !(beta > n as f64) {
        return Err(FracError::PowerDomain { beta, n });
    }
    if !(t >= a) {
        return Err(FracError::InvalidSamples("caputo_power requires t >= a"));
    }
    let exponent = beta - alpha.value() - 1.0;
    let scale = gamma(beta)? / gamma(beta - alpha.value())?;
    let tau = t - a;
    if tau == 0.0 {
        return if exponent > 0.0 {
            Ok(0.0)
        } else if exponent == 0.0 {
            Ok(scale)
        } else {
            Err(FracError::SingularAtStart)
        };
    }
    Ok(scale * tau.powf(exponent))
}

/// Classical L1 approximation of the Caputo derivative at node `j`.
///
/// Piecewise-linear interpolation of the samples, integrated exactly against
/// the kernel; exact whenever `x` is affine.
pub fn caputo_l1(x: &SampledFunction, alpha: FractionalOrder, j: usize) -> Result<f64, FracError> {
    check_l1_order(alpha)?;
    let last = x.len() - 1;
    if j == 0 || j > last {
        return Err(FracError::IndexOutOfRange { index: j, last });
    }
    let beta = 1.0 - alpha.value();
    let (t, v) = (x.grid(), x.values());
    let tj = t[j];
    let mut acc = 0.0;
    for k in 0..j {
        let slope = (v[k + 1] - v[k]) / (t[k + 1] - t[k]);
        acc += slope * ((tj - t[k]).powf(beta) - (tj - t[k + 1]).powf(beta));
    }
    Ok(acc / gamma(2.0 - alpha.value())?)
}

/// L1 approximation at every node; entry 0 is set to 0.
///
/// Equispaced grids reuse one weight table, bringing the cost down from
/// `O(n^2)` powers to `O(n)` powers plus `O(n^2)` multiply-adds.
pub fn caputo_l1_all(x: &SampledFunction, alpha: FractionalOrder) -> Result<Vec<f64>, FracError> {
    check_l1_order(alpha)?;
    let n = x.len() - 1;
    let (t, v) = (x.grid(), x.values());
    if n == 0 {
        return Ok(vec![0.0]);
    }
    let h = (t[n] - t[0]) / n as f64;
    let uniform = t
        .windows(2)
        .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
    if !uniform {
        let mut out = vec![0.0];
        for j in 1..=n {
            out.push(caputo_l1(x, alpha, j)?);
        }
        return Ok(out);
    }
    let beta = 1.0 - alpha.value();
    let scale = h.powf(-alpha.value()) / gamma(2.0 - alpha.value())?;
    let weights: Vec<f64> = (0..n)
        .map(|m| ((m + 1) as f64).powf(beta) - (m as f64).powf(beta))
        .collect();
    let diffs: Vec<f64> = v.windows(2).map(|w| w[1] - w[0]).collect();
    let mut out = vec![0.0; n + 1];
    for j in 1..=n {
        let acc: f64 = (0..j).map(|k| weights[j - 1 - k] * diffs[k]).sum();
        out[j] = acc * scale;
    }
    Ok(out)
}

/// Standard truncation estimate of the L1 scheme on a grid of step `h`,
/// given `m2 >= max |x''|`.
pub fn l1_error_estimate(alpha: FractionalOrder, h: f64, m2: f64) -> Result<f64, FracError> {
    check_l1_order(alpha)?;
    let al = alpha.value();
    let c = (1.0 - al) / 12.0 + 2f64.powf(2.0 - al) / (2.0 - al) - (1.0 + 2f64.powf(-al));
    Ok(m2 * c * h.powf(2.0 - al) / gamma(2.0 - al)?)
}

fn check_l1_order(alpha: FractionalOrder) -> Result<(), FracError> {
    if alpha.is_solver_order() {
        Ok(())
    } else {
        Err(FracError::InvalidOrder(alpha.value(), "L1 scheme requires 0 < alpha < 1"))
    }
}

/// Riemann–Liouville derivative recovered from a Caputo value, `0 < alpha < 1`.
pub fn rl_from_caputo(
    caputo_value: f64,
    x_a: f64,
    alpha: FractionalOrder,
    a: f64,
    t: f64,
) -> Result<f64, FracError> {
    if !alpha.is_solver_order() {
        return Err(FracError::InvalidOrder(alpha.value(), "relation implemented for 0 < alpha < 1"));
    }
    if x_a == 0.0 {
        return Ok(caputo_value);
    }
    let tau = t - a;
    if !(tau > 0.0) {
        return Err(FracError::SingularAtStart);
    }
    Ok(caputo_value + x_a * tau.powf(-alpha.value()) / gamma(1.0 - alpha.value())?)
}

/// Truncated power series for the Riemann–Liouville derivative of an
/// analytic function, from its derivatives `derivs[k] = x^(k)(t)`.
///
/// Terms past `derivs.len()` are treated as zero. Intended as a test utility:
/// convergence needs analytic `x`.
pub fn rl_series(
    derivs: &[f64],
    alpha: FractionalOrder,
    a: f64,
    t: f64,
    k_max: usize,
) -> Result<f64, FracError> {
    let tau = t - a;
    if !(tau > 0.0) {
        return Err(FracError::SingularAtStart);
    }
    let al = alpha.value();
    // coeff_k = binom(alpha, k) tau^(k - alpha) / Γ(k + 1 - alpha), by recurrence
    let mut coeff = tau.powf(-al) / gamma(1.0 - al)?;
    let mut acc = 0.0;
    for k in 0..=k_max {
        if let Some(d) = derivs.get(k) {
            acc += coeff * d;
        }
        let kf = k as f64;
        coeff *= (al - kf) / (kf + 1.0) * tau / (kf + 1.0 - al);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn half() -> FractionalOrder {
        FractionalOrder::solver(0.5).unwrap()
    }

    #[test]
    fn order_validation() {
        assert!(FractionalOrder::new(0.0).is_err());
        assert!(FractionalOrder::new(f64::INFINITY).is_err());
        assert!(FractionalOrder::new(1.5).is_ok());
        assert!(FractionalOrder::solver(1.0).is_err());
        assert_eq!(half().caputo_n(), 1);
        assert_eq!(FractionalOrder::new(2.0).unwrap().caputo_n(), 2);
        assert_eq!(FractionalOrder::new(2.3).unwrap().caputo_n(), 3);
    }

    #[test]
    fn sampled_function_invariants() {
        assert!(SampledFunction::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(SampledFunction::new(vec![0.0, 0.0], vec![1.0, 1.0]).is_err());
        assert!(SampledFunction::new(vec![0.0, 1.0], vec![1.0, f64::NAN]).is_err());
    }

    // Independent route: the gamma-ratio definition of the coefficient.
    fn binomial_by_gamma(alpha: f64, k: u32) -> f64 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        sign * alpha * gamma(k as f64 - alpha).unwrap()
            / (gamma(1.0 - alpha).unwrap() * gamma(k as f64 + 1.0).unwrap())
    }

    #[test]
    fn frac_binomial_examples() {
        assert_relative_eq!(frac_binomial(0.5, 0), 1.0);
        assert_relative_eq!(frac_binomial(0.5, 1), 0.5);
        assert_relative_eq!(frac_binomial(0.5, 2), -0.125);
        assert_relative_eq!(frac_binomial(0.5, 2), 0.5 * (0.5 - 1.0) / 2.0);
        // integer order: pole limit gives the classical coefficient
        assert_eq!(frac_binomial(2.0, 3), 0.0);
        assert_eq!(frac_binomial(3.0, 2), 3.0);
    }

    #[test]
    fn frac_binomial_matches_gamma_form() {
        for &alpha in &[0.1, 0.37, 0.5, 0.81, 0.99] {
            for k in 0..25 {
                assert_relative_eq!(
                    frac_binomial(alpha, k),
                    binomial_by_gamma(alpha, k),
                    max_relative = 1e-12
                );
            }
        }
    }

    #[test]
    fn caputo_power_examples() {
        let al = half();
        let c = 2.0 / gamma(2.5).unwrap();
        for &t in &[0.1, 0.5, 1.0] {
            assert_relative_eq!(caputo_power(al, 3.0, 0.0, t).unwrap(), c * t.powf(1.5), max_relative = 1e-14);
        }
        assert_eq!(caputo_power(al, 3.0, 0.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(caputo_power(al, 2.0, 0.0, 1.0).unwrap(), std::f64::consts::FRAC_2_SQRT_PI, max_relative = 1e-13);
        assert!(matches!(caputo_power(al, 1.0, 0.0, 1.0), Err(FracError::PowerDomain { .. })));
    }

    #[test]
    fn l1_constant_is_zero() {
        let x = SampledFunction::uniform(0.0, 2.0, 20, |_| 3.5).unwrap();
        for j in 1..=20 {
            assert_eq!(caputo_l1(&x, half(), j).unwrap(), 0.0);
        }
    }

    #[test]
    fn l1_exact_on_affine() {
        for &alpha in &[0.2, 0.5, 0.8] {
            let al = FractionalOrder::solver(alpha).unwrap();
            let x = SampledFunction::uniform(0.0, 1.0, 50, |t| t).unwrap();
            let all = caputo_l1_all(&x, al).unwrap();
            for j in 1..=50 {
                let t = x.grid()[j];
                let exact = caputo_power(al, 2.0, 0.0, t).unwrap();
                assert_relative_eq!(caputo_l1(&x, al, j).unwrap(), exact, max_relative = 1e-12);
                assert_relative_eq!(all[j], exact, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn l1_nonuniform_grid_exact_on_affine() {
        let grid: Vec<f64> = (0..=30).map(|i| (i as f64 / 30.0).powi(2)).collect();
        let x = SampledFunction::from_fn(grid, |t| 2.0 * t - 1.0).unwrap();
        let all = caputo_l1_all(&x, half()).unwrap();
        let t = x.grid()[30];
        assert_relative_eq!(all[30], 2.0 * caputo_power(half(), 2.0, 0.0, t).unwrap(), max_relative = 1e-12);
    }

    #[test]
    fn l1_index_errors() {
        let x = SampledFunction::uniform(0.0, 1.0, 4, |t| t).unwrap();
        assert!(matches!(caputo_l1(&x, half(), 0), Err(FracError::IndexOutOfRange { .. })));
        assert!(matches!(caputo_l1(&x, half(), 5), Err(FracError::IndexOutOfRange { .. })));
    }

    #[test]
    fn l1_quadratic_within_tolerance_and_converges() {
        let al = half();
        let exact = caputo_power(al, 3.0, 0.0, 1.0).unwrap();
        let err = |n: usize| {
            let x = SampledFunction::uniform(0.0, 1.0, n, |t| t * t).unwrap();
            (caputo_l1(&x, al, n).unwrap() - exact).abs()
        };
        assert!(err(1000) <= 1e-3);
        let e1 = err(200);
        let e2 = err(400);
        let e3 = err(800);
        let order1 = (e1 / e2).log2();
        let order2 = (e2 / e3).log2();
        assert!(order1 >= 1.4 && order2 >= 1.4, "orders {order1} {order2}");
        assert!(err(100) <= l1_error_estimate(al, 0.01, 2.0).unwrap());
    }

    #[test]
    fn rl_relation() {
        let al = half();
        assert_eq!(rl_from_caputo(0.7, 0.0, al, 0.0, 0.0).unwrap(), 0.7);
        let t: f64 = 0.64;
        let expected = 2.0 * t.powf(-0.5) / PI.sqrt();
        assert_relative_eq!(rl_from_caputo(0.0, 2.0, al, 0.0, t).unwrap(), expected, max_relative = 1e-14);
        assert!(matches!(rl_from_caputo(0.0, 2.0, al, 0.0, 0.0), Err(FracError::SingularAtStart)));
        let c = caputo_power(al, 3.0, 0.0, t).unwrap();
        assert_eq!(rl_from_caputo(c, 0.0, al, 0.0, t).unwrap(), c);
    }

    #[test]
    fn rl_series_terminates_on_quadratic() {
        let al = half();
        // x = t^2 at t = 1
        let v = rl_series(&[1.0, 2.0, 2.0], al, 0.0, 1.0, 2).unwrap();
        let caputo = caputo_power(al, 3.0, 0.0, 1.0).unwrap();
        let rl = rl_from_caputo(caputo, 0.0, al, 0.0, 1.0).unwrap();
        assert_relative_eq!(v, rl, max_relative = 1e-13);
        assert_relative_eq!(v, 2.0 / gamma(2.5).unwrap(), max_relative = 1e-13);
        assert_eq!(rl_series(&[0.0; 6], al, 0.0, 1.0, 5).unwrap(), 0.0);
        assert!(rl_series(&[1.0], al, 1.0, 1.0, 0).is_err());
    }

    #[test]
    fn rl_series_approaches_l1_oracle_for_exponential() {
        let al = half();
        let a = 0.0;
        let t = 0.5_f64;
        let n = 4000;
        let x = SampledFunction::uniform(a, t, n, f64::exp).unwrap();
        let caputo = caputo_l1(&x, al, n).unwrap();
        let oracle = rl_from_caputo(caputo, 1.0, al, a, t).unwrap();
        let derivs = vec![t.exp(); 40];
        let errs: Vec<f64> = [1, 3, 6]
            .iter()
            .map(|&k| (rl_series(&derivs, al, a, t, k).unwrap() - oracle).abs())
            .collect();
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
        // past K = 6 the sampled oracle's own error (~h^1.5) dominates
        assert!((rl_series(&derivs, al, a, t, 30).unwrap() - oracle).abs() < 2e-6);

        // termwise derivative of the Taylor series at a: Σ t^(k-α)/Γ(k+1-α)
        let exact: f64 = (0..40).map(|k| t.powf(k as f64 - 0.5) / gamma(k as f64 + 0.5).unwrap()).sum();
        assert_relative_eq!(rl_series(&derivs, al, a, t, 39).unwrap(), exact, max_relative = 1e-12);
    }
}
