use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use fieldledger_store::Store;
use fieldledger_tracker::Tracker;

#[derive(Parser)]
#[command(name = "fieldledger-runs", about = "List and inspect tracked runs")]
struct Cli {
    #[arg(long, env = "FL_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    List,
    Show {
        run_id: String,
        /// Also re-read pinned snapshots and compare digests.
        #[arg(long)]
        check: bool,
    },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let tracker = Tracker::open(Arc::new(Store::open(&cli.data_dir)?))?;
    match cli.command {
        Command::List => {
            for run in tracker.list_runs()? {
                println!(
                    "{}\t{}\t{:?}\t{}",
                    run.run_id, run.name, run.status, run.started_at
                );
            }
        }
        Command::Show { run_id, check } => {
            println!("{}", serde_json::to_string_pretty(&tracker.get_run(&run_id)?)?);
            if check {
                for c in tracker.check_snapshots(&run_id)? {
                    let verdict = if c.matches() { "ok" } else { "MISMATCH" };
                    println!("{}@{}\t{verdict}", c.table, c.version);
                }
            }
        }
    }
    Ok(())
}
