use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use edgesplit::commands;
use edgesplit::{exit_code, ConfigError, ExperimentConfig};

#[derive(Debug, Parser)]
#[command(name = "edgesplit", version, about = "Split learning vs. federated learning over simulated wireless edge devices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file; built-in defaults when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for independent runs (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    parallel: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Split learning against FedAvg, FedProx and FedOpt.
    Compare,
    /// Split learning at each configured cut position.
    SweepCut,
    /// Split learning at each configured client count.
    SweepClients,
    /// Energy/latency allocation sweeps over power, frequency and bandwidth limits.
    Allocate,
    /// Export the prepared dataset splits.
    GenData,
    /// Print the effective configuration as TOML.
    ShowConfig,
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load(cli)?;
    if let Some(n) = cli.parallel {
        if n == 0 {
            return Err(ConfigError("--parallel must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("starting the worker pool")?;
    }
    let written = match cli.command {
        Command::Compare => commands::write_output(&cfg, &commands::compare(&cfg)?.0)?,
        Command::SweepCut => commands::write_output(&cfg, &commands::sweep_cut(&cfg)?.0)?,
        Command::SweepClients => commands::write_output(&cfg, &commands::sweep_clients(&cfg)?.0)?,
        Command::Allocate => commands::write_output(&cfg, &commands::allocate(&cfg)?.0)?,
        Command::GenData => commands::gen_data(&cfg)?,
        Command::ShowConfig => {
            print!("{}", cfg.to_toml());
            Vec::new()
        }
    };
    for path in written {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err) as u8)
        }
    }
}
