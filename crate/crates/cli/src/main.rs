use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dncl_cli::{execute, ExperimentConfig, ExperimentKind, RunStatus};

#[derive(Parser, Debug)]
#[command(name = "dncl", version, about = "Negative correlation learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Scalar regressors converging on a constant target, with and without NCL.
    Dynamics(RunArgs),
    /// Decision surfaces and held-out accuracy on the spirals data.
    Surface(RunArgs),
    /// Train an ensemble and write checkpoint, metrics and diversity.
    Train(RunArgs),
    /// Score a saved checkpoint on the configured data.
    Eval(RunArgs),
    /// Bias-variance-covariance decomposition over repeated trainings.
    Decompose(RunArgs),
    /// Grouped versus full Rademacher complexity of linear heads.
    Rademacher(RunArgs),
    /// Write the synthetic datasets as CSV.
    GenData(RunArgs),
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// TOML config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out` from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the resolved config and exit.
    #[arg(long)]
    print_config: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NCL_LOG", "info")).init();
    let cli = Cli::parse();
    let (kind, args) = match cli.command {
        Command::Dynamics(a) => (ExperimentKind::Dynamics, a),
        Command::Surface(a) => (ExperimentKind::Surface, a),
        Command::Train(a) => (ExperimentKind::Train, a),
        Command::Eval(a) => (ExperimentKind::Eval, a),
        Command::Decompose(a) => (ExperimentKind::Decompose, a),
        Command::Rademacher(a) => (ExperimentKind::Rademacher, a),
        Command::GenData(a) => (ExperimentKind::GenData, a),
    };
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(kind: ExperimentKind, args: RunArgs) -> dncl_cli::Result<()> {
    let mut cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(out) = args.out {
        cfg.out = out;
    }
    let cfg = cfg.resolve(kind)?;
    if args.print_config {
        print!("{}", cfg.to_toml_string());
        return Ok(());
    }
    let (manifest, result) = execute(&cfg)?;
    result?;
    debug_assert_eq!(manifest.status, RunStatus::Complete);
    for o in &manifest.outputs {
        println!("{}", cfg.out.join(&o.path).display());
    }
    Ok(())
}
