use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use iesis_experiments::config::{ExperimentConfig, ExperimentKind};
use iesis_experiments::error::{ExperimentError, Result};
use iesis_experiments::oracle_report;

#[derive(Parser)]
#[command(name = "iesis", version, about = "Ensemble-based implicit sampling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configured experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the exact posterior of a linear configuration.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the resolved defaults of an experiment kind.
    Describe { experiment: String },
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.output = o;
            }
            let outcome = iesis_experiments::run(&cfg)?;
            let json = serde_json::to_string_pretty(&outcome.summary).map_err(|e| ExperimentError::Output {
                path: "stdout".into(),
                message: e.to_string(),
            })?;
            println!("{json}");
            eprintln!(
                "wrote {} in {:.1}s",
                outcome.output.display(),
                outcome.total_time().as_secs_f64()
            );
        }
        Command::Oracle { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = oracle_report(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Describe { experiment } => {
            let kind = ExperimentKind::parse(&experiment)?;
            print!("{}", ExperimentConfig::defaults(kind).to_toml_string());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
