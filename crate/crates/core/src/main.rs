use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vi_ident::experiments::{parse_config, run_and_write, Experiment};

#[derive(Parser)]
#[command(name = "vi-ident", version, about = "Friction VI forward solves and parameter identification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem at the configured parameters.
    SolveForward(Common),
    /// Regularization error against the unregularized solution, per kernel and eps.
    RateStudy(Common),
    /// Approximation bounds of the smoothing kernels.
    KernelCheck(Common),
    /// Adjoint gradients and sensitivities against finite differences.
    CheckGradient(Common),
    /// Twin-experiment identification at the last eps of the schedule.
    Identify(Common),
    /// Identification over the whole eps schedule with warm starts.
    Continuation(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Output root; overrides `output_dir` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Exit nonzero when any non-qualitative check fails.
    #[arg(long)]
    strict: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::SolveForward(a) => (Experiment::SolveForward, a),
        Command::RateStudy(a) => (Experiment::RateStudy, a),
        Command::KernelCheck(a) => (Experiment::KernelCheck, a),
        Command::CheckGradient(a) => (Experiment::CheckGradient, a),
        Command::Identify(a) => (Experiment::Identify, a),
        Command::Continuation(a) => (Experiment::Continuation, a),
    };
    let mut config = match parse_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let out = args.out.unwrap_or_else(|| config.output_dir.clone());
    let (report, dir) = match run_and_write(experiment, &config, &out) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    for c in &report.checks {
        let status = match (c.passed, c.qualitative) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "NOTE",
        };
        match c.limit {
            Some(limit) => println!("{status} {}: {:e} (limit {limit:e})", c.name, c.value),
            None => println!("{status} {}", c.name),
        }
    }
    println!("wrote {}", dir.display());
    if args.strict && !report.passed() {
        for c in report.failures() {
            eprintln!("check failed: {}", c.name);
        }
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
