//! Command-line front end: `focsolve run` and `focsolve compare`.
//!
//! Exit codes: 0 when the solver converged (or `compare` succeeded), 1 on any
//! input error, 2 when the solver stopped without converging.

pub mod format;
pub mod problem_file;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use focsolve_core::focp::{parse_expr, Expr, Var};
use focsolve_core::{
    build_augmented, error_bound, pontryagin_check, solve, transcribe, FractionalOrder, Grid, Mode, SolveOptions,
};
use thiserror::Error;

use format::{decimal12, trajectory_csv, Report};
use problem_file::{parse_problem, ProblemFileError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "focsolve", version, about = "Direct solver for fractional optimal control problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the problem in a problem file.
    Run(RunArgs),
    /// Compare a trajectory file with reference solutions x(t), u(t).
    Compare(CompareArgs),
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub problem: PathBuf,
    /// Number of moment states kept in the expansion.
    #[arg(long = "K", default_value_t = 3)]
    pub k: usize,
    /// Number of Euler steps.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value = "shooting")]
    pub mode: Mode,
    /// Trajectory output; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Report output; standard error when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Bound on |x''| used for the reported truncation error bound.
    #[arg(long)]
    pub m2: Option<f64>,
    #[arg(long)]
    pub outer_tol: Option<f64>,
    #[arg(long)]
    pub inner_tol: Option<f64>,
    #[arg(long)]
    pub max_outer: Option<usize>,
    #[arg(long)]
    pub max_inner: Option<usize>,
    #[arg(long)]
    pub penalty_init: Option<f64>,
    #[arg(long)]
    pub penalty_growth: Option<f64>,
    /// Lower bound on every control (needs --u-max).
    #[arg(long, requires = "u_max", allow_hyphen_values = true)]
    pub u_min: Option<f64>,
    /// Upper bound on every control (needs --u-min).
    #[arg(long, requires = "u_min", allow_hyphen_values = true)]
    pub u_max: Option<f64>,
}

#[derive(Debug, clap::Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub traj: PathBuf,
    /// Reference state as an expression in t.
    #[arg(long, allow_hyphen_values = true)]
    pub x_ref: String,
    /// Reference control as an expression in t.
    #[arg(long, allow_hyphen_values = true)]
    pub u_ref: String,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("error[io]: {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("error[parse]: {path}: {source}")]
    ProblemSyntax { path: PathBuf, source: ProblemFileError },
    #[error("error[validation]: {0}")]
    Validation(String),
    #[error("error[expression]: {0}")]
    Expression(String),
    #[error("error[trajectory]: {path}: {message}")]
    Trajectory { path: PathBuf, message: String },
    #[error("error[solver]: {0}")]
    Solver(String),
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.to_owned(), source })
}

fn options(args: &RunArgs) -> SolveOptions {
    let d = SolveOptions::default();
    SolveOptions {
        outer_tol: args.outer_tol.unwrap_or(d.outer_tol),
        inner_tol: args.inner_tol.unwrap_or(d.inner_tol),
        max_outer: args.max_outer.unwrap_or(d.max_outer),
        max_inner: args.max_inner.unwrap_or(d.max_inner),
        penalty_init: args.penalty_init.unwrap_or(d.penalty_init),
        penalty_growth: args.penalty_growth.unwrap_or(d.penalty_growth),
        u_bounds: args.u_min.zip(args.u_max),
        ..d
    }
}

/// `focsolve run`; returns the exit code on success.
pub fn run(args: &RunArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let text = read(&args.problem)?;
    let problem = parse_problem(&text).map_err(|e| {
        if e.is_syntax() {
            CliError::ProblemSyntax { path: args.problem.clone(), source: e }
        } else {
            CliError::Validation(e.to_string())
        }
    })?;
    if args.k < 2 {
        return Err(CliError::Validation(format!("--K must be at least 2, got {}", args.k)));
    }
    if args.n < 2 {
        return Err(CliError::Validation(format!("--n must be at least 2, got {}", args.n)));
    }
    if let Some(m2) = args.m2 {
        if !(m2 >= 0.0) {
            return Err(CliError::Validation(format!("--m2 must be nonnegative, got {m2}")));
        }
    }
    let opts = options(args);
    opts.validate().map_err(|e| CliError::Validation(e.to_string()))?;

    let aug = build_augmented(&problem, args.k).map_err(|e| CliError::Validation(e.to_string()))?;
    let mut grid = Grid::new(problem.a(), problem.b(), args.n).map_err(|e| CliError::Validation(e.to_string()))?;
    if problem.m_dot() == 0.0 {
        grid = grid.with_start_offset();
    }
    let nlp = transcribe(&aug, &grid, args.mode).map_err(|e| CliError::Validation(e.to_string()))?;
    let report = solve(&nlp, &opts).map_err(|e| CliError::Solver(e.to_string()))?;

    let mut out = Report::default();
    out.put("mode", args.mode);
    out.put("K", args.k);
    out.put("n", args.n);
    out.put("converged", report.converged);
    out.num("objective", report.objective);
    out.num("max_constraint_violation", report.max_constraint_violation);
    out.num("first_order_residual", report.first_order_residual);
    out.put("inner_iterations", report.inner_iterations);
    out.put("outer_iterations", report.outer_iterations);
    if args.mode == Mode::Full {
        match pontryagin_check(&aug, &grid, &report, &report.multipliers) {
            Ok(cert) => {
                out.num("stationarity_residual", cert.stationarity_residual);
                out.num("costate_defect", cert.costate_defect);
                for (p, v) in cert.transversality.iter().enumerate() {
                    out.num(&format!("lambda_{}_at_b", p + 1), *v);
                }
                out.num("transversality_residual", cert.transversality_residual());
            }
            Err(e) => out.put("pontryagin", format!("unavailable ({e})")),
        }
    }
    let alpha = FractionalOrder::solver(problem.alpha().value()).map_err(|e| CliError::Validation(e.to_string()))?;
    let per_unit = error_bound(alpha, args.k, problem.a(), problem.b(), 1.0)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    out.num("error_bound_per_unit_m2", per_unit);
    if let Some(m2) = args.m2 {
        out.num("m2", m2);
        out.num("error_bound", m2 * per_unit);
    }

    let csv = trajectory_csv(&report.trajectory);
    match &args.out {
        Some(path) => write(path, &csv)?,
        None => stdout.write_all(csv.as_bytes()).map_err(|source| CliError::Io { path: "<stdout>".into(), source })?,
    }
    let rendered = out.render();
    match &args.report {
        Some(path) => write(path, &rendered)?,
        None => {
            stderr.write_all(rendered.as_bytes()).map_err(|source| CliError::Io { path: "<stderr>".into(), source })?
        }
    }
    Ok(if report.converged { EXIT_OK } else { EXIT_NOT_CONVERGED })
}

fn reference(text: &str, what: &str) -> Result<Expr, CliError> {
    let e = parse_expr(text).map_err(|e| CliError::Expression(format!("{what}: {e}")))?;
    if e.depends_on(Var::X) || e.depends_on(Var::U) {
        return Err(CliError::Expression(format!("{what}: reference must depend on t only")));
    }
    Ok(e)
}

/// Sup-norm and RMS errors of a trajectory against references.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub x_sup: f64,
    pub x_rms: f64,
    pub u_sup: f64,
    pub u_rms: f64,
}

/// Compare trajectory file contents with `x_ref(t)` and `u_ref(t)`.
pub fn compare_text(csv: &str, x_ref: &Expr, u_ref: &Expr) -> Result<Comparison, String> {
    let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().ok_or("empty file")?.split(',').map(str::trim).collect();
    if header.len() < 3 || header[..3] != ["t", "x", "u"] {
        return Err("header must start with t,x,u".into());
    }
    let mut xs = Vec::new();
    let mut us = Vec::new();
    for (idx, line) in lines.enumerate() {
        let row = idx + 2;
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(format!("line {row}: expected {} fields, found {}", header.len(), fields.len()));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| format!("line {row}: `{s}` is not a number"));
        let t = num(fields[0])?;
        let eval = |e: &Expr| e.eval(t, 0.0, 0.0).map_err(|err| format!("line {row}: reference: {err}"));
        xs.push((num(fields[1])? - eval(x_ref)?).abs());
        if !fields[2].is_empty() {
            us.push((num(fields[2])? - eval(u_ref)?).abs());
        }
    }
    if xs.len() < 2 || us.len() + 1 != xs.len() {
        return Err(format!("grid length mismatch: {} state rows, {} control rows", xs.len(), us.len()));
    }
    let sup = |v: &[f64]| v.iter().fold(0.0, |m: f64, e| m.max(*e));
    let rms = |v: &[f64]| (v.iter().map(|e| e * e).sum::<f64>() / v.len() as f64).sqrt();
    Ok(Comparison { x_sup: sup(&xs), x_rms: rms(&xs), u_sup: sup(&us), u_rms: rms(&us) })
}

/// `focsolve compare`.
pub fn compare(args: &CompareArgs, stdout: &mut dyn Write) -> Result<i32, CliError> {
    let x_ref = reference(&args.x_ref, "x-ref")?;
    let u_ref = reference(&args.u_ref, "u-ref")?;
    let csv = read(&args.traj)?;
    let c = compare_text(&csv, &x_ref, &u_ref).map_err(|message| CliError::Trajectory { path: args.traj.clone(), message })?;
    let text = format!(
        "x_sup = {}\nx_rms = {}\nu_sup = {}\nu_rms = {}\n",
        decimal12(c.x_sup),
        decimal12(c.x_rms),
        decimal12(c.u_sup),
        decimal12(c.u_rms)
    );
    stdout.write_all(text.as_bytes()).map_err(|source| CliError::Io { path: "<stdout>".into(), source })?;
    Ok(EXIT_OK)
}

/// Parse arguments and dispatch; returns the process exit code.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return EXIT_OK;
            }
            let _ = write!(stderr, "error[usage]: {}", e.render());
            return EXIT_INPUT;
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a, stdout, stderr),
        Command::Compare(a) => compare(a, stdout),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            EXIT_INPUT
        }
    }
}
