//! Projected limited-memory BFGS with a weak Wolfe line search.

use std::collections::VecDeque;

/// Result of one evaluation of a smooth function.
pub(crate) struct Sample {
    pub value: f64,
    pub grad: Vec<f64>,
}

pub(crate) struct InnerOutcome {
    pub z: Vec<f64>,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) struct InnerSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub memory: usize,
}

/// Initial inverse Hessian of the two-loop recursion.
pub(crate) trait Metric {
    /// Overwrite `q` with `H0 q`; `newest` is the latest `(s, y)` pair.
    fn apply(&mut self, q: &mut [f64], newest: Option<(&[f64], &[f64])>);

    /// Whether the first step should be shortened to unit length.
    fn unscaled(&self) -> bool {
        false
    }

    /// Current `μ` of a penalty metric, carried into the next round.
    fn penalty_mu(&self) -> Option<f64> {
        None
    }
}

/// `H0 = (sᵀy / yᵀy) I`.
pub(crate) struct ScaledIdentity;

impl Metric for ScaledIdentity {
    fn apply(&mut self, q: &mut [f64], newest: Option<(&[f64], &[f64])>) {
        if let Some((s, y)) = newest {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|qi| *qi *= gamma);
        }
    }

    fn unscaled(&self) -> bool {
        true
    }
}

const ARMIJO: f64 = 1e-4;
const CURVATURE: f64 = 0.9;
const MIN_STEP: f64 = 1e-20;
const MAX_STEP: f64 = 1e20;
const MAX_TRIALS: usize = 80;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn project(z: &mut [f64], bounds: &[(f64, f64)]) {
    for (v, &(lo, hi)) in z.iter_mut().zip(bounds) {
        *v = v.clamp(lo, hi);
    }
}

/// `max_i |P(z - g) - z|`; equals `|g|_inf` without bounds.
pub(crate) fn projected_gradient_norm(z: &[f64], g: &[f64], bounds: &[(f64, f64)]) -> f64 {
    z.iter()
        .zip(g)
        .zip(bounds)
        .map(|((&zi, &gi), &(lo, hi))| ((zi - gi).clamp(lo, hi) - zi).abs())
        .fold(0.0, f64::max)
}

// Variables sitting on a bound with the gradient pushing outward stay fixed.
fn active(z: f64, g: f64, (lo, hi): (f64, f64)) -> bool {
    (z <= lo && g > 0.0) || (z >= hi && g < 0.0)
}

/// Minimize a smooth function over a box.
///
/// `eval` returns `None` where the function is undefined; the line search
/// treats that as an infinitely bad trial point.
pub(crate) fn minimize(
    mut eval: impl FnMut(&[f64]) -> Option<Sample>,
    start: Sample,
    z0: Vec<f64>,
    bounds: &[(f64, f64)],
    settings: &InnerSettings,
    metric: &mut dyn Metric,
) -> InnerOutcome {
    let n = z0.len();
    let mut z = z0;
    let mut cur = start;
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(settings.memory);
    let mut iterations = 0;
    let mut converged = projected_gradient_norm(&z, &cur.grad, bounds) <= settings.tol;

    while !converged && iterations < settings.max_iter {
        let free: Vec<bool> = (0..n).map(|i| !active(z[i], cur.grad[i], bounds[i])).collect();
        let mut q: Vec<f64> = cur.grad.iter().zip(&free).map(|(&g, &f)| if f { g } else { 0.0 }).collect();

        // two-loop recursion
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        metric.apply(&mut q, history.back().map(|(s, y, _)| (s.as_slice(), y.as_slice())));
        q.iter_mut().zip(&free).for_each(|(qi, &f)| if !f { *qi = 0.0 });
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut dir: Vec<f64> = q.iter().zip(&free).map(|(&d, &f)| if f { -d } else { 0.0 }).collect();
        if dot(&dir, &cur.grad) >= 0.0 {
            history.clear();
            dir = cur.grad.iter().zip(&free).map(|(&g, &f)| if f { -g } else { 0.0 }).collect();
        }

        // weak Wolfe line search on the projected path, by bisection
        let slack = 4.0 * f64::EPSILON * cur.value.abs();
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let mut step = if history.is_empty() && metric.unscaled() {
            1.0_f64.min(1.0 / dir.iter().fold(0.0, |m: f64, d| m.max(d.abs())).max(f64::MIN_POSITIVE))
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..MAX_TRIALS {
            let mut trial: Vec<f64> = z.iter().zip(&dir).map(|(zi, di)| zi + step * di).collect();
            project(&mut trial, bounds);
            let moved: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
            let predicted = dot(&cur.grad, &moved);
            match eval(&trial) {
                Some(sample) if sample.value.is_finite() && sample.value <= cur.value + ARMIJO * predicted + slack => {
                    let curved = dot(&sample.grad, &moved) >= CURVATURE * predicted;
                    accepted = Some((trial, sample, moved));
                    if curved {
                        break;
                    }
                    lo = step;
                }
                _ => {
                    hi = step;
                    if accepted.is_some() {
                        // keep the last sufficient-decrease point
                        break;
                    }
                }
            }
            step = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * lo };
            if !(MIN_STEP..=MAX_STEP).contains(&step) {
                break;
            }
        }
        iterations += 1;
        let Some((trial, sample, s)) = accepted else {
            break;
        };
        let y: Vec<f64> = sample.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == settings.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        z = trial;
        cur = sample;
        converged = projected_gradient_norm(&z, &cur.grad, bounds) <= settings.tol;
    }

    InnerOutcome { z, grad: cur.grad, iterations, converged }
}
