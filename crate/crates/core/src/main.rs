use std::path::PathBuf;
use std::process::ExitCode;

use bregquant::cli::{run, CliError, WORKERS_ENV};
use bregquant::config::{ExperimentConfig, Subcommand};
use clap::{Parser, ValueEnum};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Command {
    DivergenceEval,
    Quantize,
    ZadorVerify,
    IdentityCheck,
    FirewallCheck,
    PierceCheck,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::DivergenceEval => Subcommand::DivergenceEval,
            Command::Quantize => Subcommand::Quantize,
            Command::ZadorVerify => Subcommand::ZadorVerify,
            Command::IdentityCheck => Subcommand::IdentityCheck,
            Command::FirewallCheck => Subcommand::FirewallCheck,
            Command::PierceCheck => Subcommand::PierceCheck,
        }
    }
}

/// Bregman quantization experiments.
#[derive(Debug, Parser)]
#[command(name = "bregquant", version)]
struct Args {
    #[arg(value_enum)]
    command: Command,
    /// TOML experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; falls back to BREGQUANT_WORKERS, then to all cores.
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory; overrides `out_dir` of the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn workers(flag: Option<usize>) -> Result<Option<usize>, CliError> {
    if flag.is_some() {
        return Ok(flag);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::Config(format!("{WORKERS_ENV}={v} is not a worker count"))),
        Err(_) => Ok(None),
    }
}

fn main_inner(args: Args) -> Result<(), CliError> {
    let mut cfg =
        ExperimentConfig::read(&args.config).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(n) = workers(args.workers)? {
        if n == 0 {
            return Err(CliError::Config("worker count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    let out = args.out.unwrap_or_else(|| cfg.out_path());
    let result = run(args.command.into(), &cfg, &out)?;
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    for f in &result.files {
        println!("{}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match main_inner(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
