use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fpqkd_cli::commands::{cmd_analyze, cmd_bounds, cmd_simulate, cmd_sweep, Outcome};
use fpqkd_cli::config::TraceFormat;
use fpqkd_cli::{load_config, Overrides, Result, RunConfig};

/// Fully-passive decoy-state BB84 simulator.
#[derive(Parser)]
#[command(name = "fpqkd", version)]
struct Cli {
    /// TOML configuration; defaults are used when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo run with tallies, decoy bounds and key rate.
    Simulate {
        /// Also export the local readouts of every source sample.
        #[arg(long, value_enum)]
        trace: Option<TraceFormat>,
    },
    /// Reshape and classify a recorded trace.
    Analyze { trace: PathBuf },
    /// Analytic key rate over the configured loss grid.
    Sweep,
    /// Decoy bounds and key rate from a tallies.csv report.
    Bounds { tallies: PathBuf },
    /// Print the effective configuration.
    Config,
}

fn run(cli: Cli) -> Result<Option<Outcome>> {
    let base = match &cli.config {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let trace = match &cli.command {
        Command::Simulate { trace } => *trace,
        _ => None,
    };
    let cfg = Overrides {
        seed: cli.seed,
        samples: cli.samples,
        out: cli.out.clone(),
        trace,
    }
    .apply(base)?;
    Ok(Some(match cli.command {
        Command::Simulate { .. } => cmd_simulate(&cfg)?,
        Command::Analyze { trace } => cmd_analyze(&trace, &cfg)?,
        Command::Sweep => cmd_sweep(&cfg)?.0,
        Command::Bounds { tallies } => cmd_bounds(&tallies, &cfg)?,
        Command::Config => {
            print!("{}", cfg.dump());
            return Ok(None);
        }
    }))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Some(out)) => {
            for f in &out.files {
                println!("{}", f.display());
            }
            println!("{}", serde_json::to_string_pretty(&out.summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Ok(None) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
