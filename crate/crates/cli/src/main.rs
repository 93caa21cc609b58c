use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use diffmig_cli::commands::{cmd_estimate, cmd_proportions, cmd_simulate, cmd_standardize, cmd_validate};
use diffmig_cli::{CliError, CliResult, Invocation, RunConfig};

/// Drift and diffusion estimation from irregular noisy tracks, and
/// closed-form migration proportions in a bounded rectangle.
#[derive(Debug, Parser)]
#[command(name = "diffmig", version)]
struct Args {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Track CSV with header path_id,t,x,y.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Master seed for every random stage; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Project lon/lat degrees to planar km.
    #[arg(long, global = true)]
    project_lonlat: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic tracks from the config's simulate section.
    Simulate,
    /// Per-path and collective estimates with bootstrap intervals.
    Estimate,
    /// Migration-proportion matrices over the configured areas.
    Proportions,
    /// Run every oracle cross-check.
    Validate,
    /// Standardized increments and quantile pairs.
    Standardize,
}

fn run(args: Args) -> CliResult<PathBuf> {
    let mut config = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.override_seed(seed);
    }
    config.project_lonlat |= args.project_lonlat;
    let inv = Invocation {
        config,
        data: args.data,
        out: args.out,
    };
    match args.command {
        Command::Simulate => cmd_simulate(&inv),
        Command::Estimate => cmd_estimate(&inv),
        Command::Proportions => cmd_proportions(&inv),
        Command::Validate => cmd_validate(&inv),
        Command::Standardize => cmd_standardize(&inv),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(args) {
        Ok(path) => {
            println!("{}", path.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
