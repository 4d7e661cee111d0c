use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use maxtomo_cli::commands;
use maxtomo_cli::config::{Ini, RunConfig};
use maxtomo_cli::CliError;

/// Microwave tomography: chamber meshing, forward solves, synthetic data and reconstruction.
///
/// Any configuration key can be overridden with `--section.key=value`.
#[derive(Debug, Parser)]
#[command(name = "maxtomo", version)]
struct Cli {
    /// INI configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Noise seed for `synth`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true, env = "MAXTOMO_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate (or load) the chamber mesh and write it as MSH.
    Meshgen,
    /// Solve every transmitter and write the S-matrix.
    Forward,
    /// Phantom forward solve, noise and empty-chamber reference.
    Synth,
    /// Reconstruct the permittivity from measured data.
    Invert {
        /// Measured S-matrix CSV.
        #[arg(long)]
        smes: Option<PathBuf>,
        /// Empty-chamber S-matrix CSV.
        #[arg(long)]
        sempty: Option<PathBuf>,
    },
    /// Forward sweeps over subdomain and thread counts.
    Bench,
}

/// Split `--section.key=value` overrides from the arguments clap sees.
fn split_overrides(args: impl Iterator<Item = String>) -> (Vec<String>, Vec<String>) {
    args.partition(|a| {
        a.strip_prefix("--")
            .and_then(|r| r.split_once('='))
            .is_none_or(|(name, _)| !name.contains('.'))
    })
}

fn run(cli: Cli, overrides: &[String]) -> Result<(), CliError> {
    let mut ini = match &cli.config {
        Some(p) => Ini::load(p)?,
        None => Ini::default(),
    };
    for o in overrides {
        ini.apply_override(o.trim_start_matches('-'))?;
    }
    let config = RunConfig::from_ini(&ini)?;
    let threads = cli.threads.or(config.threads);
    if threads == Some(0) {
        return Err(CliError::config(anyhow::anyhow!("--threads must be at least 1")));
    }
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(CliError::solver)?;
    }
    match cli.command {
        Command::Meshgen => commands::meshgen(&config),
        Command::Forward => commands::forward(&config),
        Command::Synth => commands::synth(&config, cli.seed.unwrap_or(config.seed)),
        Command::Invert { smes, sempty } => commands::invert(&config, smes.as_deref(), sempty.as_deref()),
        Command::Bench => commands::bench(&config).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let (args, overrides) = split_overrides(std::env::args());
    let cli = Cli::parse_from(args);
    match run(cli, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.summary());
            ExitCode::from(e.code as u8)
        }
    }
}
