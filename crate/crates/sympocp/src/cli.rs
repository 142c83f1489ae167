//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 on solver, I/O or failed-check outcomes, 2 on usage errors.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use crate::catalog::{Problem, CATALOG};
use crate::dhs::{step_linear, NonlinearDHS};
use crate::error::Error;
use crate::integrators::{integrate, integrate_del, DelStart, MethodKind, MethodSpec};
use crate::model::PhasePoint;
use crate::ocp::continuous::uniform_grid;
use crate::ocp::{shoot_continuous, shoot_discrete, DiscreteOCP, ShootingConfig};
use crate::problem::{load_problem, LinearDhsProblem, ProblemInput};
use crate::trajectory::{to_csv, to_json, OutputFormat, Sample, Trajectory};
use crate::verify::{run_check, Check, CheckOptions};

pub const SEED_ENV: &str = "SYMPOCP_SEED";

#[derive(Parser, Debug)]
#[command(name = "sympocp", version, about = "Generating-function integrators and optimal control solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the canonical equations from the problem's initial point.
    Integrate(IntegrateArgs),
    /// Solve the Euler-discretized optimal control problem by shooting.
    SolveDocp(DocpArgs),
    /// Solve the continuous two-point boundary value problem by shooting.
    SolveOcp(OcpArgs),
    /// Run a verification check and emit a JSON report.
    Verify(VerifyArgs),
    /// List built-in problems.
    Catalog,
}

#[derive(Args, Debug)]
struct ProblemArgs {
    /// Catalog name or path to a JSON problem file.
    #[arg(long)]
    problem: String,
}

#[derive(Args, Debug)]
struct MethodArgs {
    /// gf2-euler, series, del or del-adaptive.
    #[arg(long)]
    method: String,
    /// Truncation order of the series method (1 to 3).
    #[arg(long)]
    order: Option<usize>,
    /// Quadrature weight of the DEL methods.
    #[arg(long)]
    alpha: Option<f64>,
    /// Residual tolerance of the implicit step solver.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Args, Debug)]
struct OutputArgs {
    #[arg(long)]
    out: PathBuf,
    /// Defaults to json for a `.json` path and csv otherwise.
    #[arg(long, value_enum)]
    format: Option<Format>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args, Debug)]
struct IntegrateArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    method: MethodArgs,
    /// Step size (unused for discrete Hamiltonian systems).
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    steps: usize,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    q0: Option<Vec<f64>>,
    /// Initial costate, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    p0: Option<Vec<f64>>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct DocpArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Horizon; defaults to the problem file's `N` or to `(T − t0)/h`.
    #[arg(long = "N")]
    horizon: Option<usize>,
    /// Stage length; when given with a horizon the final time becomes `t0 + N·h`.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct OcpArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long)]
    h: f64,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    check: String,
    #[command(flatten)]
    problem: ProblemArgs,
    #[command(flatten)]
    method: MethodArgs,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Random phase points for the symplecticity sweep.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Sampling seed; overrides SYMPOCP_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Report path; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Outcome of a subcommand that did not succeed.
enum Failure {
    Usage(String),
    Solver(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInput(_) | Error::Dimension { .. } | Error::Model(_) => Failure::Usage(e.to_string()),
            other => Failure::Solver(other.to_string()),
        }
    }
}

fn usage(flag: &str, e: impl std::fmt::Display) -> Failure {
    Failure::Usage(format!("{flag}: {e}"))
}

type Outcome = std::result::Result<(), Failure>;

/// Parses `argv` (including the program name) and runs the subcommand.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let outcome = match cli.command {
        Command::Integrate(a) => cmd_integrate(a),
        Command::SolveDocp(a) => cmd_solve_docp(a),
        Command::SolveOcp(a) => cmd_solve_ocp(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Catalog => {
            for e in CATALOG {
                println!("{:<9} n={} m={}  {}", e.name, e.n, e.m, e.summary);
            }
            Ok(())
        }
    };
    match outcome {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn load(args: &ProblemArgs) -> std::result::Result<ProblemInput, Failure> {
    load_problem(&args.problem).map_err(|e| match e {
        Error::InvalidInput(msg) => usage("--problem", msg),
        Error::Io(io) => usage("--problem", io),
        other => other.into(),
    })
}

fn load_continuous(args: &ProblemArgs) -> std::result::Result<(Problem, Option<usize>), Failure> {
    load(args)?.continuous().map_err(|e| usage("--problem", e))
}

fn method_spec(args: &MethodArgs) -> std::result::Result<MethodSpec, Failure> {
    let kind: MethodKind = args.method.parse().map_err(|e| usage("--method", e))?;
    let mut spec = MethodSpec::new(kind);
    if let Some(r) = args.order {
        spec.order = r;
    }
    if let Some(a) = args.alpha {
        spec.alpha = a;
    }
    if let Some(t) = args.tol {
        spec.implicit_tol = t;
    }
    if let Some(k) = args.max_iter {
        spec.implicit_max_iter = k;
    }
    spec.validate().map_err(|e| {
        let flag = match &e {
            Error::InvalidInput(m) if m.contains("order") => "--order",
            Error::InvalidInput(m) if m.contains("alpha") => "--alpha",
            Error::InvalidInput(m) if m.contains("max_iter") => "--max-iter",
            _ => "--tol",
        };
        usage(flag, e)
    })?;
    Ok(spec)
}

fn positive_h(h: f64) -> Outcome {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(usage("--h", format!("must be positive (got {h})")))
    }
}

fn output_format(args: &OutputArgs) -> OutputFormat {
    match args.format {
        Some(Format::Csv) => OutputFormat::Csv,
        Some(Format::Json) => OutputFormat::Json,
        None if args.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) => OutputFormat::Json,
        None => OutputFormat::Csv,
    }
}

/// Serializes first so that nothing is written unless the whole document is.
fn write_trajectory(traj: &Trajectory, args: &OutputArgs) -> Outcome {
    let text = match output_format(args) {
        OutputFormat::Csv => to_csv(traj),
        OutputFormat::Json => to_json(traj)?,
    };
    write_text(&args.out, &text)
}

fn write_text(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text).map_err(|e| Failure::Solver(format!("cannot write {}: {e}", path.display())))
}

fn override_vec(base: &DVector<f64>, given: &Option<Vec<f64>>, flag: &str) -> std::result::Result<DVector<f64>, Failure> {
    match given {
        None => Ok(base.clone()),
        Some(v) if v.len() == base.len() => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(usage(flag, format!("expected {} values, got {}", base.len(), v.len()))),
    }
}

fn cmd_integrate(a: IntegrateArgs) -> Outcome {
    let input = load(&a.problem)?;
    let method = method_spec(&a.method)?;
    if let ProblemInput::LinearDhs(dhs) = input {
        return integrate_dhs(&dhs, &a);
    }
    let (problem, _) = input.continuous()?;
    let h = a.h.ok_or_else(|| usage("--h", "required for continuous problems"))?;
    positive_h(h)?;
    let x0 = PhasePoint {
        t: problem.x0.t,
        q: override_vec(&problem.x0.q, &a.q0, "--q0")?,
        p: override_vec(&problem.x0.p, &a.p0, "--p0")?,
    };
    let traj = if method.kind.is_second_kind() {
        integrate(&method, &problem.hamiltonian, &x0, h, a.steps)
    } else {
        let lag = problem
            .lagrangian
            .as_ref()
            .ok_or_else(|| usage("--method", format!("problem {} has no Lagrangian for {}", problem.name, method.kind)))?;
        integrate_del(&method, &**lag, &DelStart::Phase(x0), h, a.steps)
    }
    .map_err(|e| Failure::Solver(e.to_string()))?;
    write_trajectory(&traj, &a.output)
}

/// Columns `q`, `p` hold `y`, `z`; `t` is the integer step and `H` the
/// quadratic Hamiltonian at `(y(t), z(t))`.
fn integrate_dhs(dhs: &LinearDhsProblem, a: &IntegrateArgs) -> Outcome {
    let d = dhs.system.d;
    let y0 = override_vec(&dhs.y0, &a.q0, "--q0")?;
    let z0 = override_vec(&dhs.z0, &a.p0, "--p0")?;
    let energy = NonlinearDHS::quadratic(&dhs.system);
    let mut traj = Trajectory::new();
    let (mut y, mut z) = (y0, z0);
    for k in 0..=a.steps {
        let t = k as i64;
        traj.push(Sample {
            t: t as f64,
            q: y.clone(),
            p: z.clone(),
            u: DVector::zeros(0),
            h_value: energy.value(t, &y, &z)?,
        })?;
        if k < a.steps {
            (y, z) = step_linear(&dhs.system, t, &y, &z)?;
        }
    }
    debug_assert_eq!(traj.state_dim(), d);
    write_trajectory(&traj, &a.output)
}

fn cmd_solve_docp(a: DocpArgs) -> Outcome {
    let (problem, file_horizon) = load_continuous(&a.problem)?;
    let mut spec = problem
        .lq
        .clone()
        .ok_or_else(|| usage("--problem", format!("{} has no LQ data to discretize", problem.name)))?;
    if let Some(h) = a.h {
        positive_h(h)?;
    }
    let horizon = match (a.horizon.or(file_horizon), a.h) {
        (Some(0), _) => return Err(usage("--N", "must be at least 1")),
        (Some(n), Some(h)) => {
            spec.t_final = spec.t0 + n as f64 * h;
            n
        }
        (Some(n), None) => n,
        (None, Some(h)) => uniform_grid(spec.t0, spec.t_final, h).map_err(|e| usage("--h", e))?.0,
        (None, None) => return Err(usage("--N", "give a horizon or a step size --h")),
    };
    let docp = DiscreteOCP::from_lq_euler(&spec, horizon)?;
    let cfg = shooting_config(a.tol, a.max_iter)?;
    let sol = shoot_discrete(&docp, &cfg)?;
    write_trajectory(&sol.to_trajectory(&docp)?, &a.output)
}

fn shooting_config(tol: Option<f64>, max_iter: Option<usize>) -> std::result::Result<ShootingConfig, Failure> {
    let mut cfg = ShootingConfig::default();
    if let Some(t) = tol {
        cfg.tol = t;
    }
    if let Some(k) = max_iter {
        cfg.max_iter = k;
    }
    cfg.validate().map_err(|e| usage("--tol/--max-iter", e))?;
    Ok(cfg)
}

fn cmd_solve_ocp(a: OcpArgs) -> Outcome {
    let (problem, _) = load_continuous(&a.problem)?;
    let method = method_spec(&a.method)?;
    positive_h(a.h)?;
    if !method.kind.is_second_kind() {
        return Err(usage("--method", "shooting propagates with a second-kind method (gf2-euler or series)"));
    }
    if problem.t_final <= problem.x0.t {
        return Err(usage("--problem", "the horizon must be positive"));
    }
    let grad = problem.terminal_gradient();
    let sol = shoot_continuous(
        &problem.hamiltonian,
        |t, q| grad(t, q),
        &problem.x0.q,
        problem.x0.t,
        problem.t_final,
        &method,
        a.h,
        &ShootingConfig::default(),
    )?;
    write_trajectory(&sol.trajectory, &a.output)
}

fn seed_from(flag: Option<u64>) -> std::result::Result<u64, Failure> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.trim().parse().map_err(|_| usage(SEED_ENV, format!("not an unsigned integer: {v:?}"))),
        Err(_) => Ok(0),
    }
}

fn cmd_verify(a: VerifyArgs) -> Outcome {
    let check: Check = a.check.parse().map_err(|e| usage("--check", e))?;
    let (problem, _) = load_continuous(&a.problem)?;
    let method = method_spec(&a.method)?;
    if let Some(h) = a.h {
        positive_h(h)?;
    }
    if a.samples == 0 {
        return Err(usage("--samples", "must be at least 1"));
    }
    let opts = CheckOptions {
        h: a.h,
        steps: a.steps,
        samples: a.samples,
        seed: seed_from(a.seed)?,
    };
    let report = run_check(check, &problem, &method, &opts)?;
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)?;
    match &a.out {
        Some(path) => write_text(path, &format!("{text}\n"))?,
        None => println!("{text}"),
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Solver(format!("check {} did not pass", report.check)))
    }
}
