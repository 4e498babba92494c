//! Fixtures shared by the benchmarks.

use focsolve_core::{build_augmented, AugmentedSystem, Focp};

/// The fractional test problem with exact solution `x = t²`, `u = 2t`.
pub fn quadratic_target(k: usize) -> AugmentedSystem {
    let p = Focp::from_text(0.5, 1.0, 1.0, 0.0, 1.0, 0.0, Some(1.0), "(u^2 - 4*x)^2", "u + 2/gamma(2.5) * t^1.5")
        .expect("valid problem");
    build_augmented(&p, k).expect("denominator has no root")
}

/// Controls `u_i = 2 t_i` on a uniform grid of `n` steps over `[0, 1]`.
pub fn exact_controls(n: usize) -> Vec<f64> {
    (0..n).map(|i| 2.0 * i as f64 / n as f64).collect()
}
