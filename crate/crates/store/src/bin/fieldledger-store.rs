//! Inspection CLI for a fieldledger store directory.

use std::io::Write;
use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};
use fieldledger_store::Store;

#[derive(Parser)]
#[command(name = "fieldledger-store", about = "Inspect versioned tables")]
struct Cli {
    /// Store root directory.
    #[arg(long, env = "FL_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// List tables in the store.
    Tables,
    /// Print the commit history of a table.
    History { table: String },
    /// Print a table's rows as NDJSON at a version (default: latest).
    Read {
        table: String,
        #[arg(long)]
        version: Option<u64>,
    },
    /// Re-hash every data file and check log continuity.
    Verify { table: String },
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let store = Store::open(&cli.data_dir)
        .with_context(|| format!("opening store at {}", cli.data_dir.display()))?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Tables => {
            for t in store.tables()? {
                writeln!(out, "{t}\t{}", store.latest_version(&t)?)?;
            }
        }
        Command::History { table } => {
            for c in store.history(&table)? {
                writeln!(out, "{}", serde_json::to_string(&c)?)?;
            }
        }
        Command::Read { table, version } => {
            let version = match version {
                Some(v) => v,
                None => store.latest_version(&table)?,
            };
            out.write_all(&store.read_at(&table, version)?.to_ndjson())?;
        }
        Command::Verify { table } => {
            let report = store.verify(&table)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
            if !report.is_clean() {
                std::process::exit(1);
            }
        }
    }
    Ok(())
}
