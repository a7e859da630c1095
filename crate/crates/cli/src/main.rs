//! `alm`: study runner for the annuity asset-allocation engine.
//!
//! `alm run <config>` executes one study described by a flat key-value
//! config file and writes `results.csv` + `manifest.txt` to the output
//! directory. `alm synth` materializes the bundled synthetic survivor
//! table and annuitant portfolio as CSV inputs.
//!
//! Exit codes: 0 success, 1 validation failure, 2 runtime failure.

mod config;
mod studies;

use clap::{Parser, Subcommand};
use config::StudyConfig;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use studies::{emit_summary, run_study, RunError};

#[derive(Parser)]
#[command(name = "alm", version, about = "Annuity asset-liability studies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the study described by a config file.
    Run {
        /// Path to the key-value config file.
        config: PathBuf,
        /// Output directory for results.csv, manifest.txt and dumps.
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Write the synthetic mortality table and portfolio as CSV files.
    Synth {
        /// Number of annuitants to generate.
        #[arg(long, default_value_t = 374)]
        annuitants: usize,
        /// Seed for the portfolio draw.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Output directory for mortality.csv and portfolio.csv.
        #[arg(long, default_value = "data")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    match dispatch() {
        Ok(()) => ExitCode::SUCCESS,
        Err(RunError::Validation(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
        Err(RunError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
    }
}

fn dispatch() -> Result<(), RunError> {
    match Cli::parse().command {
        Command::Run { config, out_dir } => {
            let text = fs::read_to_string(&config).map_err(|e| {
                RunError::Validation(format!("cannot read config {}: {e}", config.display()))
            })?;
            let parsed =
                StudyConfig::parse(&text).map_err(|e| RunError::Validation(e.to_string()))?;
            let summary = run_study(&parsed, &out_dir)?;
            print!("{}", emit_summary(Some(&summary)));
            println!("results: {}", out_dir.join("results.csv").display());
            Ok(())
        }
        Command::Synth {
            annuitants,
            seed,
            out_dir,
        } => {
            if annuitants == 0 {
                return Err(RunError::Validation(
                    "--annuitants must be at least 1".to_string(),
                ));
            }
            fs::create_dir_all(&out_dir)?;
            let table = alm_core::synthetic::makeham_table();
            let portfolio = alm_core::synthetic::annuitant_portfolio(annuitants, seed);
            fs::write(out_dir.join("mortality.csv"), table.to_csv())?;
            fs::write(out_dir.join("portfolio.csv"), portfolio.to_csv())?;
            println!(
                "wrote {} ({} ages) and {} ({} annuitants, mean age {:.1}, mean benefit {:.0})",
                out_dir.join("mortality.csv").display(),
                table.max_age() - table.min_age() + 1,
                out_dir.join("portfolio.csv").display(),
                portfolio.len(),
                portfolio.mean_age(),
                portfolio.mean_payment()
            );
            Ok(())
        }
    }
}
