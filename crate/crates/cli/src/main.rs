//! Config-driven command line for the contracting solvers.
//!
//! Exit codes: 0 success, 2 configuration or validation failure, 3 solver
//! failure, 4 verification verdict failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "pma", about = "Principal/multi-agent contracting solvers", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the principal's dynamic program and export the value surface
    /// and feedback policy.
    Solve(CommonArgs),
    /// Simulate output paths under a constant policy and export them with
    /// Monte Carlo estimates.
    Simulate(CommonArgs),
    /// Synthesize the optimal contract and test it against unilateral
    /// deviations.
    Verify(VerifyArgs),
    /// Time the main pipeline stages on the configured problem.
    Bench(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// Path to the TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread override (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Seed override.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Scale the extracted diffusion loadings while keeping the original
    /// recommendations; a falsification aid for the deviation harness.
    #[arg(long)]
    corrupt_z: Option<f64>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;
const EXIT_VERDICT: u8 = 4;

fn classify(err: &anyhow::Error) -> u8 {
    if let Some(core) = err.downcast_ref::<pma_core::Error>() {
        use pma_core::Error as E;
        match core {
            E::Model(_)
            | E::Invalid(_, _)
            | E::Parameter(_)
            | E::UnknownBuiltin { .. }
            | E::Domain(_)
            | E::DimensionGuard(_)
            | E::Verification(_) => EXIT_CONFIG,
            _ => EXIT_SOLVER,
        }
    } else {
        EXIT_CONFIG
    }
}

fn apply_overrides(config: &mut RunConfig, args: &CommonArgs) {
    if let Some(out) = &args.out {
        config.output.dir = out.clone();
    }
    if let Some(workers) = args.workers {
        config.output.workers = workers;
    }
    if let Some(seed) = args.seed {
        config.experiment.seed = seed;
    }
}

fn run(cli: Cli) -> Result<(), (u8, anyhow::Error)> {
    let (args, corrupt_z) = match &cli.command {
        Command::Solve(a) | Command::Simulate(a) | Command::Bench(a) => (a, None),
        Command::Verify(v) => (&v.common, v.corrupt_z),
    };
    let mut config = RunConfig::load(&args.config).map_err(|e| (EXIT_CONFIG, e))?;
    apply_overrides(&mut config, args);
    if config.output.workers > 0 {
        // Worker count never changes results; ignore failures from an
        // already-built pool (e.g. in tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.output.workers)
            .build_global();
    }
    std::fs::create_dir_all(&config.output.dir)
        .map_err(|e| (EXIT_CONFIG, anyhow::anyhow!("cannot create output dir: {e}")))?;

    let result = match cli.command {
        Command::Solve(_) => commands::solve(&config),
        Command::Simulate(_) => commands::simulate(&config),
        Command::Verify(_) => commands::verify(&config, corrupt_z),
        Command::Bench(_) => commands::bench(&config),
    };
    match result {
        Ok(commands::Verdict::Ok) => Ok(()),
        Ok(commands::Verdict::Failed(reason)) => {
            Err((EXIT_VERDICT, anyhow::anyhow!("verification failed: {reason}")))
        }
        Err(e) => {
            let code = classify(&e);
            Err((code, e))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((code, err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(code)
        }
    }
}
