//! Experiment runner for the entropic-transport studies.

use clap::{Parser, Subcommand};
use sbridge::study::{self, ExperimentConfig};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "sbridge", about = "Entropic transport studies on the torus", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a study described by a JSON config; exits 0 iff all thresholds pass.
    Run {
        /// Path to the experiment config (JSON).
        config: PathBuf,
        /// Output directory override (also honors SBRIDGE_OUT).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for independent parameter points.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    env_logger::init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, threads } => {
            if let Some(n) = threads {
                if sbridge::exec::parallel_enabled() {
                    sbridge::exec::configure_threads(n);
                } else {
                    eprintln!("note: built without the `parallel` feature; --threads ignored");
                }
            }
            let cfg = match ExperimentConfig::from_file(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("config error: {e}");
                    return ExitCode::from(1);
                }
            };
            match study::run(&cfg, out.as_deref()) {
                Ok(outcome) => {
                    println!(
                        "{} rows -> {}",
                        outcome.rows.len(),
                        outcome.csv_path.display()
                    );
                    println!(
                        "{:<28} {:>6} {:>14} {:>12} {:>4} {:>6}",
                        "quantity", "metric", "measured", "threshold", "cmp", "pass"
                    );
                    for s in &outcome.summary {
                        println!(
                            "{:<28} {:>6} {:>14.6e} {:>12.4e} {:>4} {:>6}",
                            s.quantity, s.metric, s.measured, s.threshold, s.cmp, s.pass
                        );
                    }
                    if outcome.passed {
                        println!("all thresholds passed");
                        ExitCode::SUCCESS
                    } else {
                        println!("threshold failures present");
                        ExitCode::from(2)
                    }
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
