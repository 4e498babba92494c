//! Direct solver for fractional optimal control problems.
//!
//! The dynamics `M x' + N ᶜD^α x = f(t, x, u)` (with `0 < α < 1`) are made
//! integer-order by a moment expansion of the Caputo derivative, transcribed
//! by forward Euler, and the resulting nonlinear program is solved with an
//! augmented-Lagrangian method.
//!
//! ```no_run
//! use focsolve_core::{build_augmented, solve, transcribe, Focp, Grid, Mode, SolveOptions};
//!
//! let problem = Focp::from_text(
//!     0.5, 1.0, 1.0, 0.0, 1.0, 0.0, Some(1.0),
//!     "(u^2 - 4*x)^2",
//!     "u + 2/gamma(2.5) * t^1.5",
//! )?;
//! let aug = build_augmented(&problem, 3)?;
//! let grid = Grid::new(0.0, 1.0, 100)?;
//! let nlp = transcribe(&aug, &grid, Mode::Shooting)?;
//! let report = solve(&nlp, &SolveOptions::default())?;
//! println!("objective {}", report.objective);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod diagnostics;
pub mod focp;
pub mod fracops;
pub mod momentexp;
pub mod optim;
pub mod transcribe;

pub use diagnostics::{hamiltonian, pontryagin_check, DiagnosticsError, PontryaginReport};
pub use focp::{build_augmented, AugmentedSystem, Expr, Focp, FocpTextError, ProblemError};
pub use fracops::{FracError, FractionalOrder, SampledFunction};
pub use momentexp::{coefficients, error_bound, MomentError, MomentScheme, MomentStates};
pub use optim::{solve, OptimError, SolveOptions, SolveReport};
pub use transcribe::{simulate, transcribe, DiscreteNlp, Grid, Mode, TranscribeError, Trajectory};
