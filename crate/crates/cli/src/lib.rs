//! Command-line front end.
//!
//! ```text
//! bondnet solve          --scenario s.json --out results/ [--steps n] [--tol t] [--max-iter n] [--no-timestamp]
//! bondnet sweep          --scenario s.json --out hist.csv|dir/ --steps n
//! bondnet check-jacobian --scenario s.json [--seed n] [--fd-step h]
//! bondnet generate       --name triangle|octahedron|grid [--nx --ny --nz] [--out s.json]
//! bondnet validate       --scenario s.json
//! ```
//!
//! Exit codes: 0 success, 1 solver non-convergence (or a Jacobian check
//! above threshold), 2 input or output error.

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use bondnet::output::{write_history_csv, ResultBundle};
use bondnet::{
    check_jacobian, emit_results, generate_example, load_sweep, parse_scenario, solve,
    validate_network, BondState, EmitOptions, EquilibriumProblem, Example, Scenario, SolveReport,
    SolverOptions, Vec3,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

/// Jacobian checks pass below this relative discrepancy.
pub const JACOBIAN_THRESHOLD: f64 = 1e-5;

#[derive(Debug, Parser)]
#[command(
    name = "bondnet",
    version,
    about = "Equilibrium of bonded node networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve a scenario and write the result bundle.
    Solve(SolveArgs),
    /// Load sweep with per-step force-extension history.
    Sweep(SolveArgs),
    /// Compare the analytic Jacobian with central finite differences.
    CheckJacobian(CheckArgs),
    /// Write a built-in example scenario.
    Generate(GenerateArgs),
    /// Parse a scenario and check the resulting network.
    Validate(ScenarioArg),
}

#[derive(Debug, Args)]
struct ScenarioArg {
    #[arg(long)]
    scenario: PathBuf,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory (or, for `sweep`, a `.csv` file for the history only).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Leave the generation time out of report.json.
    #[arg(long)]
    no_timestamp: bool,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Also check at a random perturbation of the reference state.
    #[arg(long)]
    seed: Option<u64>,
    /// Finite-difference step relative to the mean rest length.
    #[arg(long, default_value_t = 1e-6)]
    fd_step: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ExampleName {
    Triangle,
    Octahedron,
    Grid,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    name: ExampleName,
    #[arg(long, default_value_t = 3)]
    nx: usize,
    #[arg(long, default_value_t = 3)]
    ny: usize,
    #[arg(long, default_value_t = 3)]
    nz: usize,
    /// Destination file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    NotConverged(String),
}

impl Failure {
    fn input(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        Failure::Input(format!("{context}: {err}"))
    }
}

type CliResult = Result<(), Failure>;

/// Parse `args` (including the program name) and run the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => run_solve(&a, false),
        Command::Sweep(a) => run_solve(&a, true),
        Command::CheckJacobian(a) => run_check(&a),
        Command::Generate(a) => run_generate(&a),
        Command::Validate(a) => run_validate(&a.scenario),
    };
    match outcome {
        Ok(()) => EXIT_OK,
        Err(Failure::Input(msg)) => {
            eprintln!("error[input]: {msg}");
            EXIT_INPUT
        }
        Err(Failure::NotConverged(msg)) => {
            eprintln!("error[solver]: {msg}");
            EXIT_NOT_CONVERGED
        }
    }
}

fn load_scenario(path: &Path) -> Result<Scenario, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::input(path.display(), e))?;
    parse_scenario(&text).map_err(|e| Failure::input(path.display(), e))
}

fn load_problem(path: &Path) -> Result<(EquilibriumProblem, SolverOptions), Failure> {
    let scenario = load_scenario(path)?;
    scenario
        .to_problem(&SolverOptions::default())
        .map_err(|e| Failure::input(path.display(), e))
}

fn run_solve(args: &SolveArgs, sweep: bool) -> CliResult {
    let (prob, mut opts) = load_problem(&args.scenario)?;
    if let Some(steps) = args.steps {
        opts.load_steps = steps;
    }
    if let Some(tol) = args.tol {
        opts.tol_residual = tol;
    }
    if let Some(n) = args.max_iter {
        opts.max_iterations = n;
    }
    opts.validate()
        .map_err(|e| Failure::input("solver options", e))?;

    let report = if opts.load_steps > 1 || sweep {
        load_sweep(&prob, &opts)
    } else {
        solve(&prob, &opts, None)
    }
    .map_err(|e| Failure::input(args.scenario.display(), e))?;

    let history_only = sweep
        && args
            .out
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if history_only {
        if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Failure::input(parent.display(), e))?;
        }
        let bundle = ResultBundle::from_report(&prob, &report);
        write_history_csv(&args.out, &bundle.history).map_err(|e| Failure::input("output", e))?;
    } else {
        let emit = EmitOptions {
            history: sweep,
            timestamp: !args.no_timestamp,
        };
        emit_results(&args.out, &prob, &report, &emit).map_err(|e| Failure::input("output", e))?;
    }
    summarize(&report);
    if report.converged() {
        Ok(())
    } else {
        let failed = report.clone().into_result().unwrap_err();
        Err(Failure::NotConverged(failed.to_string()))
    }
}

fn summarize(report: &SolveReport) {
    println!(
        "status: {:?}, steps: {}/{}, iterations: {}, residual: {:.3e} (tol {:.3e}), broken: {}",
        report.status,
        report.completed_steps,
        report.load_steps,
        report.iterations,
        report.residual_norm,
        report.tolerance,
        report.broken_bonds.len(),
    );
}

fn run_check(args: &CheckArgs) -> CliResult {
    if !(args.fd_step > 0.0 && args.fd_step.is_finite()) {
        return Err(Failure::Input("--fd-step must be positive".into()));
    }
    let (prob, _) = load_problem(&args.scenario)?;
    let states = vec![BondState::Intact; prob.network().bond_count()];
    let mut points = vec![("reference".to_string(), prob.reference_free_positions())];
    if let Some(seed) = args.seed {
        // small enough to stay clear of the first yield point in typical laws
        let amp = 1e-3 * prob.network().mean_rest_length();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = prob
            .reference_free_positions()
            .iter()
            .map(|p| p + Vec3::from_fn(|_, _| rng.gen_range(-amp..amp)))
            .collect();
        points.push((format!("seed {seed}"), x));
    }

    let mut worst = 0.0f64;
    for (label, x) in &points {
        let check = check_jacobian(&prob, x, &states, args.fd_step)
            .map_err(|e| Failure::input(args.scenario.display(), e))?;
        let dim = 3 * x.len();
        println!(
            "{label}: dim {dim}, max relative discrepancy {:.3e}, frobenius relative {:.3e}",
            check.max_relative, check.frobenius_relative
        );
        worst = worst.max(check.max_relative);
    }
    if worst < JACOBIAN_THRESHOLD {
        println!("ok: max discrepancy {worst:.3e} < {JACOBIAN_THRESHOLD:.0e}");
        Ok(())
    } else {
        Err(Failure::NotConverged(format!(
            "max discrepancy {worst:.3e} exceeds {JACOBIAN_THRESHOLD:.0e}"
        )))
    }
}

fn run_generate(args: &GenerateArgs) -> CliResult {
    let example = match args.name {
        ExampleName::Triangle => Example::Triangle,
        ExampleName::Octahedron => Example::Octahedron,
        ExampleName::Grid => Example::Grid {
            nx: args.nx,
            ny: args.ny,
            nz: args.nz,
        },
    };
    let scenario = generate_example(example).map_err(|e| Failure::input("generate", e))?;
    let text = scenario.to_json() + "\n";
    match &args.out {
        Some(path) => std::fs::write(path, text).map_err(|e| Failure::input(path.display(), e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_validate(path: &Path) -> CliResult {
    let (prob, _) = load_problem(path)?;
    let diagnostics = validate_network(prob.network());
    if !diagnostics.is_empty() {
        return Err(Failure::input(path.display(), format!("{diagnostics:?}")));
    }
    println!(
        "ok: {} nodes, {} bonds, {} free, {} prescribed",
        prob.network().node_count(),
        prob.network().bond_count(),
        prob.partition().free().len(),
        prob.partition().prescribed().len(),
    );
    Ok(())
}
