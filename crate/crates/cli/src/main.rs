//! `almlab`: solve, verify and generate equality-constrained convex problems.
//!
//! Exit codes:
//! - 0: success (solve reached `--grad-stop`; every verify certificate passed)
//! - 1: unreadable or invalid input, or a check whose preconditions fail
//! - 2: solve stopped at `--max-outer`
//! - 3: solve stopped on divergence or a stalled subproblem
//! - 4: verify produced at least one failing certificate

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use almlab_core::io::{certificates_to_json, problem_to_json, read_problem, trace_to_csv};
use almlab_core::verify::{
    check_concavity, check_conjugate_identity, check_domain, check_gradient_fd, check_gradient_invariance,
    check_moreau_identity, check_smoothness, integer_lattice, ConjugateSettings, MoreauSettings, SmoothnessSettings,
};
use almlab_core::{
    accelerated_alm, alm, generate, BenchmarkSpec, Certificate, DualPoint, Family, GridSpec, OuterSettings,
    ProblemInstance, SplitMix64, TerminationReason, TolSchedule,
};

const SEED_ENV: &str = "ALMLAB_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "almlab",
    version,
    about = "Augmented Lagrangian solver and dual-structure verifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the method of multipliers and write the outer trace as CSV.
    Solve(SolveArgs),
    /// Sample the dual and write a JSON array of certificates.
    Verify(VerifyArgs),
    /// Write a generated benchmark instance as a problem file.
    Bench(BenchArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum Method {
    Alm,
    Accelerated,
}

#[derive(clap::Args, Debug)]
struct SolveArgs {
    problem: PathBuf,
    #[arg(long, value_enum, default_value = "alm")]
    method: Method,
    /// Initial multiplier, comma separated; defaults to zero.
    #[arg(long, allow_hyphen_values = true)]
    lam0: Option<String>,
    #[arg(long, default_value_t = 500)]
    max_outer: usize,
    #[arg(long, default_value_t = 1e-6)]
    grad_stop: f64,
    /// Inner tolerance at the first outer iteration.
    #[arg(long, default_value_t = 1e-4)]
    inner_tol0: f64,
    /// Per-iteration factor applied to the inner tolerance (floor 1e-12).
    #[arg(long, default_value_t = 0.5)]
    inner_factor: f64,
    /// Trace destination; the trace goes to stdout when omitted.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Check {
    Smoothness,
    GradientFd,
    Concavity,
    Moreau,
    Conjugate,
    Invariance,
    Domain,
}

#[derive(clap::Args, Debug)]
struct VerifyArgs {
    problem: PathBuf,
    #[arg(
        long,
        value_enum,
        value_delimiter = ',',
        default_value = "smoothness,gradient_fd,concavity"
    )]
    checks: Vec<Check>,
    /// Overridden by the ALMLAB_SEED environment variable when set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pairs for smoothness and concavity, points for the other sampled checks.
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 10.0)]
    radius: f64,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Finite-difference step for gradient_fd.
    #[arg(long, default_value_t = 1e-4)]
    fd_step: f64,
    /// Report destination; the report goes to stdout when omitted.
    #[arg(long)]
    report_out: Option<PathBuf>,
}

#[derive(clap::Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 1)]
    p: usize,
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Overridden by the ALMLAB_SEED environment variable when set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Problem file destination; the file goes to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Solve(args) => cmd_solve(&args),
        Command::Verify(args) => cmd_verify(&args),
        Command::Bench(args) => cmd_bench(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn seed_from_env(flag: u64) -> Result<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{SEED_ENV}={v:?} is not an unsigned integer")),
        Err(_) => Ok(flag),
    }
}

fn emit(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn load(path: &Path) -> Result<ProblemInstance> {
    read_problem(path).with_context(|| format!("reading problem {}", path.display()))
}

fn parse_lam0(text: &str, p: usize) -> Result<DualPoint> {
    let values = text
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("bad --lam0 entry {s:?}"))
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != p {
        bail!(
            "--lam0 has {} entries but the problem has p = {p} constraints",
            values.len()
        );
    }
    Ok(DualPoint::new(DVector::from_vec(values))?)
}

fn cmd_solve(args: &SolveArgs) -> Result<u8> {
    let pb = load(&args.problem)?;
    let lam0 = match &args.lam0 {
        Some(s) => parse_lam0(s, pb.num_constraints())?,
        None => DualPoint::zeros(pb.num_constraints()),
    };
    let settings = OuterSettings {
        max_outer: args.max_outer,
        grad_stop: args.grad_stop,
        schedule: TolSchedule::Geometric {
            tol0: args.inner_tol0,
            factor: args.inner_factor,
            floor: 1e-12,
        },
        ..Default::default()
    };
    let trace = match args.method {
        Method::Alm => alm(&pb, &lam0, &settings)?,
        Method::Accelerated => accelerated_alm(&pb, &lam0, &settings)?,
    };
    emit(args.trace_out.as_deref(), &trace_to_csv(&trace))?;
    let last = trace.records.last();
    eprintln!(
        "terminated={} outer_iterations={} grad_norm={:.6e} phi_est={:.6e}",
        trace.terminated.as_str(),
        trace.records.len(),
        last.map_or(f64::NAN, |r| r.grad_norm),
        last.map_or(f64::NAN, |r| r.phi_est),
    );
    Ok(match trace.terminated {
        TerminationReason::GradStop => 0,
        TerminationReason::MaxOuter => 2,
        TerminationReason::Divergence | TerminationReason::InnerStalled => 3,
    })
}

/// Points per axis for the brute-force grids, chosen so each stays well under
/// the grid size limit and keeps integer and half-integer points on the grid.
fn w_grid(p: usize) -> Result<GridSpec> {
    let points = match p {
        1 => 2001,
        2 => 81,
        _ => 41,
    };
    Ok(GridSpec::cube(p, -10.0, 10.0, points)?)
}

fn x_grid(d: usize) -> Result<GridSpec> {
    let points = match d {
        1 => 1601,
        2 => 65,
        3 => 33,
        _ => 17,
    };
    Ok(GridSpec::cube(d, -8.0, 8.0, points)?)
}

fn run_check(pb: &ProblemInstance, check: Check, args: &VerifyArgs, seed: u64) -> Result<Certificate> {
    let p = pb.num_constraints();
    let cert = match check {
        Check::Smoothness => check_smoothness(pb, &SmoothnessSettings::new(args.radius, args.samples, args.tol, seed))?,
        Check::GradientFd => {
            let mut rng = SplitMix64::new(seed);
            let lams: Vec<_> = (0..args.samples).map(|_| rng.ball_point(p, args.radius)).collect();
            check_gradient_fd(pb, &lams, args.fd_step, args.tol)?
        }
        Check::Concavity => check_concavity(pb, args.radius, args.samples, args.tol, seed)?,
        Check::Moreau => {
            if p > 3 {
                bail!("moreau check needs p <= 3 for the brute-force envelope, but the problem has p = {p}");
            }
            let settings = MoreauSettings {
                w_grid: w_grid(p)?,
                x_grid: if pb.dim() <= 4 { Some(x_grid(pb.dim())?) } else { None },
                tol_inner: args.tol,
            };
            check_moreau_identity(pb, &integer_lattice(p, -3, 3), &settings)?
        }
        Check::Conjugate => {
            if pb.dim() > 3 {
                bail!(
                    "conjugate check needs d <= 3 for the brute-force conjugate, but the problem has d = {}",
                    pb.dim()
                );
            }
            let settings = ConjugateSettings {
                x_grid: x_grid(pb.dim())?,
                tol_inner: args.tol,
            };
            check_conjugate_identity(pb, &integer_lattice(p, -3, 3), &settings)?
        }
        Check::Invariance => {
            let lam = SplitMix64::new(seed).ball_point(p, args.radius);
            check_gradient_invariance(pb, &lam, 10, args.tol, seed)?
        }
        Check::Domain => check_domain(pb, 1e3, args.samples, args.tol, seed)?,
    };
    Ok(cert)
}

fn cmd_verify(args: &VerifyArgs) -> Result<u8> {
    let seed = seed_from_env(args.seed)?;
    let pb = load(&args.problem)?;
    let mut certs = Vec::with_capacity(args.checks.len());
    for &check in &args.checks {
        let cert = run_check(&pb, check, args, seed)?;
        eprintln!(
            "{:<12} {} worst={:.6e} threshold={:.6e}",
            cert.check_name,
            if cert.pass { "PASS" } else { "FAIL" },
            cert.worst_violation,
            cert.threshold
        );
        certs.push(cert);
    }
    emit(args.report_out.as_deref(), &certificates_to_json(&certs)?)?;
    Ok(if certs.iter().all(|c| c.pass) { 0 } else { 4 })
}

fn cmd_bench(args: &BenchArgs) -> Result<u8> {
    let family: Family = args.family.parse()?;
    let spec = BenchmarkSpec::new(family, args.d, args.p, args.rho, seed_from_env(args.seed)?);
    let pb = generate(&spec)?;
    emit(args.out.as_deref(), &problem_to_json(&pb)?)?;
    Ok(0)
}
