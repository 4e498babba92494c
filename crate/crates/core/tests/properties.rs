use focsolve_core::diagnostics::{hamiltonian, hamiltonian_partials};
use focsolve_core::focp::{diff_expr, parse_expr, Var};
use focsolve_core::fracops::{caputo_l1, caputo_power, frac_binomial, gamma, rl_from_caputo};
use focsolve_core::momentexp::coefficients;
use focsolve_core::optim::{minimize, ConstrainedProblem};
use focsolve_core::transcribe::discrete_objective;
use focsolve_core::{build_augmented, simulate, transcribe, Focp, FractionalOrder, Grid, Mode, SampledFunction, SolveOptions};
use proptest::prelude::*;

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1e-300)
}

// Random expressions as text, built from the grammar's pieces.
fn expr_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        Just("t".to_string()),
        Just("x".to_string()),
        Just("u".to_string()),
        (0.1f64..5.0).prop_map(|v| format!("{v:.3}")),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) + {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} - ({b})")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("{a} * {b}")),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| format!("({a}) / (2 + ({b})^2)")),
            inner.clone().prop_map(|a| format!("-{a}")),
            inner.clone().prop_map(|a| format!("({a})^2")),
            inner.clone().prop_map(|a| format!("sin({a})")),
            inner.clone().prop_map(|a| format!("exp(0.1 * ({a}))")),
            inner.clone().prop_map(|a| format!("sqrt(1 + ({a})^2)")),
            inner.prop_map(|a| format!("abs({a})^1.5")),
        ]
    })
}

const CORPUS: &[&str] = &[
    "(u^2 - 4*x)^2",
    "u + 2/gamma(2.5) * t^1.5",
    "x^2 + u^2",
    "sin(x) * cos(u) - exp(x*u)",
    "ln(1 + x^2) + sqrt(2 + u^2)",
    "x^3 * u^-2 + t*x",
    "-x^2 / (1 + u^2)",
    "gamma(2 + x^2)",
    "abs(x - 3) * u",
    "2^x + x^u",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gamma_recurrence(x in 0.1f64..30.0) {
        prop_assert!(close(gamma(x + 1.0).unwrap(), x * gamma(x).unwrap(), 1e-12));
    }

    #[test]
    fn binomial_first_terms(alpha in 0.001f64..0.999) {
        prop_assert_eq!(frac_binomial(alpha, 0), 1.0);
        prop_assert!(close(frac_binomial(alpha, 1), alpha, 1e-12));
    }

    #[test]
    fn rl_equals_caputo_when_start_vanishes(alpha in 0.05f64..0.95, beta in 1.01f64..4.0, t in 0.01f64..3.0) {
        let al = FractionalOrder::solver(alpha).unwrap();
        let c = caputo_power(al, beta, 0.0, t).unwrap();
        prop_assert_eq!(rl_from_caputo(c, 0.0, al, 0.0, t).unwrap(), c);
    }

    #[test]
    fn l1_exact_on_affine(alpha in 0.05f64..0.95, slope in -3.0f64..3.0, icpt in -3.0f64..3.0, n in 2usize..60) {
        let al = FractionalOrder::solver(alpha).unwrap();
        let x = SampledFunction::uniform(0.0, 2.0, n, |t| slope * t + icpt).unwrap();
        for j in 1..=n {
            let t = x.grid()[j];
            let exact = slope * caputo_power(al, 2.0, 0.0, t).unwrap();
            let got = caputo_l1(&x, al, j).unwrap();
            prop_assert!((got - exact).abs() <= 1e-12 * exact.abs().max(1.0), "{} vs {}", got, exact);
        }
    }

    #[test]
    fn coefficient_identities_hold(alpha in 0.02f64..0.98, k in 2usize..=10) {
        let s = coefficients(FractionalOrder::solver(alpha).unwrap(), k).unwrap();
        let constants = s.a() + s.c_all().iter().sum::<f64>();
        let affine = s.a() + s.b() + (2..=k).map(|p| s.c(p) * (p as f64 - 1.0) / p as f64).sum::<f64>();
        prop_assert!(close(constants, 1.0 / gamma(1.0 - alpha).unwrap(), 1e-10));
        prop_assert!(close(affine, 1.0 / gamma(2.0 - alpha).unwrap(), 1e-10));
    }

    #[test]
    fn print_parse_round_trip(text in expr_text(), pts in prop::collection::vec((-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0), 100)) {
        let e = parse_expr(&text).unwrap();
        let printed = e.to_string();
        let back = parse_expr(&printed).unwrap();
        for (t, x, u) in pts {
            match (e.eval(t, x, u), back.eval(t, x, u)) {
                (Ok(a), Ok(b)) => prop_assert!(close(a, b, 1e-12), "{} vs {} for {}", a, b, printed),
                (Err(_), Err(_)) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?} for {}", a, b, printed),
            }
        }
    }

    #[test]
    fn derivatives_match_differences(t in 0.2f64..2.0, x in 0.2f64..2.0, u in 0.2f64..2.0) {
        for text in CORPUS {
            let e = parse_expr(text).unwrap();
            for var in [Var::X, Var::U] {
                let d = diff_expr(&e, var).unwrap();
                let v = if var == Var::X { x } else { u };
                let h = 1e-6 * v.abs().max(1.0);
                let at = |w: f64| if var == Var::X { e.eval(t, w, u) } else { e.eval(t, x, w) };
                let (Ok(up), Ok(down), Ok(exact)) = (at(v + h), at(v - h), d.eval(t, x, u)) else {
                    continue;
                };
                let fd = (up - down) / (2.0 * h);
                prop_assert!((exact - fd).abs() <= 1e-6 * exact.abs().max(1.0), "{}: d/d{} {} vs {}", text, var.name(), exact, fd);
            }
        }
    }

    #[test]
    fn without_fractional_term_rhs_is_f_over_m(t in 0.0f64..1.0, x in -2.0f64..2.0, u in -2.0f64..2.0, m in 0.5f64..3.0,
                                                v in prop::collection::vec(-5.0f64..5.0, 3)) {
        let p = Focp::from_text(0.4, m, 0.0, 0.0, 1.0, 0.3, None, "u^2", "sin(x) + u*t").unwrap();
        let aug = build_augmented(&p, 4).unwrap();
        let f = (x.sin() + u * t) / m;
        prop_assert!(close(aug.rhs(t, x, &v, u).unwrap(), f, 1e-15));
        let parts = aug.rhs_partials(t, x, &v, u).unwrap();
        prop_assert!(parts.dv.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn simulated_points_are_feasible(us in prop::collection::vec(-2.0f64..2.0, 20), k in 2usize..6) {
        let p = Focp::from_text(0.5, 1.0, 1.0, 0.0, 1.0, 0.0, None, "(u^2 - 4*x)^2", "u + 2/gamma(2.5) * t^1.5").unwrap();
        let aug = build_augmented(&p, k).unwrap();
        let grid = Grid::new(0.0, 1.0, 20).unwrap();
        let traj = simulate(&aug, &grid, &us).unwrap();
        let full = transcribe(&aug, &grid, Mode::Full).unwrap();
        let shoot = transcribe(&aug, &grid, Mode::Shooting).unwrap();
        let z = full.pack(&traj).unwrap();
        prop_assert!(full.constraints(&z).unwrap().iter().all(|&c| c == 0.0));
        let direct = discrete_objective(&aug, &grid, &traj).unwrap();
        prop_assert_eq!(full.objective(&z).unwrap(), direct);
        prop_assert_eq!(shoot.objective(&us).unwrap(), direct);
    }

    #[test]
    fn hamiltonian_is_affine(l1 in prop::collection::vec(-3.0f64..3.0, 3), l2 in prop::collection::vec(-3.0f64..3.0, 3),
                             t in 0.05f64..1.0, x in -1.0f64..1.0, u in -1.0f64..1.0) {
        let p = Focp::from_text(0.5, 1.0, 1.0, 0.0, 1.0, 0.0, Some(1.0), "(u^2 - 4*x)^2", "u + 2/gamma(2.5) * t^1.5").unwrap();
        let aug = build_augmented(&p, 3).unwrap();
        let v = [0.1, -0.05];
        let h = |l: &[f64]| hamiltonian(&aug, t, x, &v, l, u).unwrap();
        let sum: Vec<f64> = l1.iter().zip(&l2).map(|(a, b)| a + b).collect();
        let lhs = h(&sum) + h(&[0.0; 3]);
        let rhs = h(&l1) + h(&l2);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1.0));
    }

    #[test]
    fn moment_partials_vanish_without_fractional_term(lam in prop::collection::vec(-3.0f64..3.0, 4), t in 0.0f64..1.0,
                                                      x in -1.0f64..1.0, u in -1.0f64..1.0) {
        let p = Focp::from_text(0.5, 2.0, 0.0, 0.0, 1.0, 0.0, None, "x^2 + u^2", "x*u - t").unwrap();
        let aug = build_augmented(&p, 4).unwrap();
        let hp = hamiltonian_partials(&aug, t, x, &[0.3, -0.2, 0.1], &lam, u).unwrap();
        prop_assert!(hp.dv.iter().all(|&d| d == 0.0));
    }
}

/// `½|z - target|²` subject to `A z = b`.
struct Quadratic {
    target: Vec<f64>,
    rows: Vec<(Vec<f64>, f64)>,
}

impl ConstrainedProblem for Quadratic {
    type Error = String;

    fn dim(&self) -> usize {
        self.target.len()
    }

    fn num_constraints(&self) -> usize {
        self.rows.len()
    }

    fn evaluate(&self, z: &[f64]) -> Result<(f64, Vec<f64>), String> {
        let f = 0.5 * z.iter().zip(&self.target).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let c = self.rows.iter().map(|(a, b)| a.iter().zip(z).map(|(p, q)| p * q).sum::<f64>() - b).collect();
        Ok((f, c))
    }

    fn weighted_gradient(&self, z: &[f64], sigma: f64, w: &[f64]) -> Result<Vec<f64>, String> {
        let mut g: Vec<f64> = z.iter().zip(&self.target).map(|(a, b)| sigma * (a - b)).collect();
        for ((a, _), wi) in self.rows.iter().zip(w) {
            for (gj, aj) in g.iter_mut().zip(a) {
                *gj += wi * aj;
            }
        }
        Ok(g)
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn unconstrained_solve_meets_gradient_tolerance(target in prop::collection::vec(-10.0f64..10.0, 1..12)) {
        let q = Quadratic { target: target.clone(), rows: vec![] };
        let dim = target.len();
        let opts = SolveOptions::default();
        let out = minimize(&q, vec![0.0; dim], &vec![(f64::NEG_INFINITY, f64::INFINITY); dim], &opts).unwrap();
        prop_assert!(out.converged);
        let g = q.weighted_gradient(&out.z, 1.0, &[]).unwrap();
        prop_assert!(g.iter().all(|v| v.abs() <= opts.inner_tol));
    }

    #[test]
    fn converged_implies_feasible(target in prop::collection::vec(-5.0f64..5.0, 4),
                                  a in prop::collection::vec(-2.0f64..2.0, 4), b in -3.0f64..3.0) {
        prop_assume!(a.iter().map(|v| v * v).sum::<f64>() > 0.1);
        let q = Quadratic { target, rows: vec![(a, b)] };
        let opts = SolveOptions::default();
        let out = minimize(&q, vec![0.0; 4], &[(f64::NEG_INFINITY, f64::INFINITY); 4], &opts).unwrap();
        prop_assert!(out.converged);
        prop_assert!(out.max_constraint_violation <= opts.outer_tol);
        prop_assert!(out.first_order_residual <= 10.0 * opts.inner_tol);
        // ∇f + Jᵀλ = 0 with the reported multipliers
        let g = q.weighted_gradient(&out.z, 1.0, &out.multipliers).unwrap();
        prop_assert!(g.iter().all(|v| v.abs() <= 1e-6), "{:?}", g);
    }
}
