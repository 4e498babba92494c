//! Moment expansion of the fractional derivative.
//!
//! For `0 < alpha < 1` the left Riemann–Liouville derivative is replaced by
//!
//! ```text
//! A (t-a)^-α x(t) + B (t-a)^(1-α) x'(t) - Σ_{p=2..K} C_p (t-a)^(1-p-α) V_p(t)
//! ```
//!
//! where each moment state solves `V_p' = (1-p)(t-a)^(p-2) x(t)`, `V_p(a) = 0`.
//! The Caputo form subtracts the initial-value term `x(a)(t-a)^-α / Γ(1-α)`.
//!
//! Coefficients satisfy two identities that make the expansion exact on
//! constants and on affine functions:
//!
//! ```text
//! A + Σ C_p             = 1 / Γ(1-α)
//! A + B + Σ C_p (p-1)/p = 1 / Γ(2-α)
//! ```

use thiserror::Error;

use crate::fracops::{gamma, FracError, FractionalOrder, SampledFunction};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MomentError {
    #[error("truncation order K = {0} must be at least 2")]
    TruncationTooSmall(usize),
    #[error(transparent)]
    Frac(#[from] FracError),
    #[error("grids of x, x' and V differ")]
    GridMismatch,
    #[error("grid index {index} out of range (last node {last})")]
    IndexOutOfRange { index: usize, last: usize },
    #[error("max |x''| bound must be non-negative, got {0}")]
    NegativeCurvature(f64),
}

/// Truncated expansion coefficients for one `(alpha, K)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentScheme {
    alpha: FractionalOrder,
    a: f64,
    b: f64,
    c: Vec<f64>,
}

impl MomentScheme {
    pub fn alpha(&self) -> FractionalOrder {
        self.alpha
    }

    /// Truncation order `K`.
    pub fn truncation(&self) -> usize {
        self.c.len() + 1
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `C_p` for `p = 2..=K`.
    pub fn c(&self, p: usize) -> f64 {
        self.c[p - 2]
    }

    /// All `C_p`, starting at `p = 2`.
    pub fn c_all(&self) -> &[f64] {
        &self.c
    }
}

/// Compute `A(alpha, K)`, `B(alpha, K)` and `C(alpha, p)`.
///
/// The ratio `g_p = Γ(p-1+α) / (Γ(α) (p-1)!)` is advanced by
/// `g_{p+1} = g_p (p-1+α) / p`, so no factorial is ever formed.
pub fn coefficients(alpha: FractionalOrder, k: usize) -> Result<MomentScheme, MomentError> {
    if k < 2 {
        return Err(MomentError::TruncationTooSmall(k));
    }
    let al = alpha.value();
    if !alpha.is_solver_order() {
        return Err(FracError::InvalidOrder(al, "moment expansion requires 0 < alpha < 1").into());
    }
    let g1ma = gamma(1.0 - al)?;
    let g2ma = gamma(2.0 - al)?;

    // g_2 = α
    let mut g = al;
    let mut sum_g = 0.0;
    let mut sum_g_over_p = 0.0;
    let mut c = Vec::with_capacity(k - 1);
    for p in 2..=k {
        let pf = p as f64;
        sum_g += g;
        sum_g_over_p += g / pf;
        // Γ(2-α) Γ(α-1) = -Γ(1-α) Γ(α)
        c.push(-g / g1ma);
        g *= (pf - 1.0 + al) / pf;
    }
    let a = (1.0 + sum_g) / g1ma;
    // Γ(p-1+α) / (Γ(α-1) p!) = (α-1) g_p / p, and the p = 1 term is α - 1
    let b = (1.0 + (al - 1.0) * (1.0 + sum_g_over_p)) / g2ma;
    Ok(MomentScheme { alpha, a, b, c })
}

/// Moment states `V_p(t_i)` for `p = 2..=K` on a sampled grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStates {
    grid: Vec<f64>,
    // values[p - 2][i]
    values: Vec<Vec<f64>>,
}

impl MomentStates {
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn truncation(&self) -> usize {
        self.values.len() + 1
    }

    pub fn get(&self, p: usize, i: usize) -> f64 {
        self.values[p - 2][i]
    }

    /// Trajectory of one moment state.
    pub fn series(&self, p: usize) -> &[f64] {
        &self.values[p - 2]
    }
}

/// Integrals over `[tau0, tau1]` of `tau^m (tau1 - tau) / h` and
/// `tau^m (tau - tau0) / h`, with `h = tau1 - tau0`.
///
/// Both are written as positive sums in `tau0`, `tau1`, so there is no
/// cancellation when `h` is small relative to `tau`.
pub(crate) fn hat_moments(tau0: f64, tau1: f64, m: usize) -> (f64, f64) {
    let h = tau1 - tau0;
    let mut left = 0.0;
    let mut right = 0.0;
    let mut p0 = 1.0; // tau0^(m-j)
    let mut pw: Vec<f64> = Vec::with_capacity(m + 1);
    for _ in 0..=m {
        pw.push(p0);
        p0 *= tau0;
    }
    let mut p1 = 1.0; // tau1^j
    for j in 0..=m {
        let term = pw[m - j] * p1;
        left += (m - j + 1) as f64 * term;
        right += (j + 1) as f64 * term;
        p1 *= tau1;
    }
    let scale = h / ((m + 1) as f64 * (m + 2) as f64);
    (left * scale, right * scale)
}

/// Integrate the moment equations on the grid of `x`.
///
/// Composite trapezoidal product rule: `x` is interpolated linearly on each
/// cell and integrated exactly against `(1-p)(t-a)^(p-2)`. For `p = 2` this is
/// the plain trapezoidal rule; for every `p` it is exact on affine `x` and
/// second order on smooth `x`.
pub fn moment_states(x: &SampledFunction, k: usize) -> Result<MomentStates, MomentError> {
    if k < 2 {
        return Err(MomentError::TruncationTooSmall(k));
    }
    let a = x.start();
    let (t, v) = (x.grid(), x.values());
    let mut values = Vec::with_capacity(k - 1);
    for p in 2..=k {
        let mut series = Vec::with_capacity(t.len());
        series.push(0.0);
        let factor = 1.0 - p as f64;
        let mut acc = 0.0;
        for i in 1..t.len() {
            let (w0, w1) = hat_moments(t[i - 1] - a, t[i] - a, p - 2);
            acc += factor * (w0 * v[i - 1] + w1 * v[i]);
            series.push(acc);
        }
        values.push(series);
    }
    Ok(MomentStates { grid: t.to_vec(), values })
}

fn check_consistent(
    x: &SampledFunction,
    xdot: &SampledFunction,
    states: &MomentStates,
    scheme: &MomentScheme,
    j: usize,
) -> Result<(), MomentError> {
    if x.grid() != xdot.grid() || x.grid() != states.grid() {
        return Err(MomentError::GridMismatch);
    }
    if states.truncation() < scheme.truncation() {
        return Err(MomentError::TruncationTooSmall(states.truncation()));
    }
    let last = x.len() - 1;
    if j > last {
        return Err(MomentError::IndexOutOfRange { index: j, last });
    }
    Ok(())
}

/// Truncated expansion of the Riemann–Liouville derivative at node `j`.
///
/// Returns 0 at the left endpoint.
pub fn approx_rl(
    x: &SampledFunction,
    xdot: &SampledFunction,
    states: &MomentStates,
    scheme: &MomentScheme,
    j: usize,
) -> Result<f64, MomentError> {
    check_consistent(x, xdot, states, scheme, j)?;
    let tau = x.grid()[j] - x.start();
    if j == 0 || tau == 0.0 {
        return Ok(0.0);
    }
    let al = scheme.alpha.value();
    let mut acc = scheme.a * tau.powf(-al) * x.values()[j]
        + scheme.b * tau.powf(1.0 - al) * xdot.values()[j];
    for p in 2..=scheme.truncation() {
        acc -= scheme.c(p) * tau.powf(1.0 - p as f64 - al) * states.get(p, j);
    }
    Ok(acc)
}

/// Truncated expansion of the Caputo derivative at node `j`.
///
/// Returns 0 at the left endpoint.
pub fn approx_caputo(
    x: &SampledFunction,
    xdot: &SampledFunction,
    states: &MomentStates,
    scheme: &MomentScheme,
    x_a: f64,
    j: usize,
) -> Result<f64, MomentError> {
    let rl = approx_rl(x, xdot, states, scheme, j)?;
    let tau = x.grid()[j] - x.start();
    if j == 0 || tau == 0.0 {
        return Ok(0.0);
    }
    let al = scheme.alpha.value();
    Ok(rl - x_a * tau.powf(-al) / gamma(1.0 - al)?)
}

/// Bound on the truncation error at `t`, given `m2 >= max |x''|` on `[a, t]`.
pub fn error_bound(
    alpha: FractionalOrder,
    k: usize,
    a: f64,
    t: f64,
    m2: f64,
) -> Result<f64, MomentError> {
    if k < 2 {
        return Err(MomentError::TruncationTooSmall(k));
    }
    if !(m2 >= 0.0) {
        return Err(MomentError::NegativeCurvature(m2));
    }
    let al = alpha.value();
    if !alpha.is_solver_order() {
        return Err(FracError::InvalidOrder(al, "error bound requires 0 < alpha < 1").into());
    }
    let tau = (t - a).max(0.0);
    let om = 1.0 - al;
    let num = (om * om + om).exp();
    let den = gamma(2.0 - al)? * om * (k as f64).powf(om);
    Ok(m2 * num / den * tau.powf(2.0 - al))
}
