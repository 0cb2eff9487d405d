use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use fieldledger_core::Catalog;
use fieldledger_pipeline::{run_pipeline, NoHook, PipelineError, PipelineOptions};
use fieldledger_store::Store;
use fieldledger_tracker::Tracker;

#[derive(Parser)]
#[command(name = "fieldledger-pipeline", about = "Run behavioral pipelines over the event store")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute metrics, KPIs, traits and interactions and commit them.
    Run {
        #[arg(long, env = "FL_DATA_DIR")]
        data_dir: PathBuf,
        #[arg(long)]
        events_version: Option<u64>,
        #[arg(long)]
        flags_version: Option<u64>,
        #[arg(long, default_value_t = 30)]
        session_gap_minutes: i64,
    },
    /// Print the check reports recorded for a run.
    Checks {
        #[arg(long, env = "FL_DATA_DIR")]
        data_dir: PathBuf,
        #[arg(long = "run")]
        run_id: String,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Run {
            data_dir,
            events_version,
            flags_version,
            session_gap_minutes,
        } => {
            let tracker = Tracker::open(Arc::new(Store::open(&data_dir)?))?;
            let catalog = Catalog::builtin().context("schema catalog failed meta-validation")?;
            let options = PipelineOptions {
                events_version,
                flags_version,
                session_gap_minutes,
            };
            match run_pipeline(&tracker, &catalog, &options, &NoHook) {
                Ok(run) => println!("{}", serde_json::to_string_pretty(&run)?),
                Err(PipelineError::ChecksFailed(report)) => {
                    eprintln!("{}", serde_json::to_string_pretty(&report)?);
                    bail!("pipeline aborted: stage {} failed its checks", report.stage);
                }
                Err(e) => return Err(e.into()),
            }
        }
        Command::Checks { data_dir, run_id } => {
            let tracker = Tracker::open(Arc::new(Store::open(&data_dir)?))?;
            let run = tracker.get_run(&run_id)?;
            let Some(reports) = run.params.get("check_reports") else {
                bail!("run {run_id} has no recorded check reports");
            };
            let reports: serde_json::Value = serde_json::from_str(reports)?;
            println!("{}", serde_json::to_string_pretty(&reports)?);
        }
    }
    Ok(())
}
