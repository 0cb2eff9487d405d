use std::path::PathBuf;

use clap::{Parser, Subcommand};

use fieldledger_sim::{plan_events, run_scenario, Scenario};

/// Deterministic connectivity simulator.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario end to end against a server and write the report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "http://localhost:8080")]
        server: String,
        /// Report path; printed to stdout when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write the scenario's event plan as NDJSON, for use with fieldledger-sdk.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().cmd {
        Cmd::Run { scenario, server, report } => {
            let scenario = Scenario::load(&scenario)?;
            let result = run_scenario(&scenario, &server)?;
            match report {
                Some(path) => {
                    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                        std::fs::create_dir_all(dir)?;
                    }
                    std::fs::write(&path, result.to_json())?;
                    eprintln!(
                        "{}: generated {}, delivered {}, retained {}",
                        result.scenario, result.generated, result.delivered_unique, result.final_retained
                    );
                }
                None => print!("{}", result.to_json()),
            }
        }
        Cmd::Plan { scenario, out } => {
            let scenario = Scenario::load(&scenario)?;
            let mut text = String::new();
            for e in plan_events(&scenario) {
                text.push_str(&serde_json::to_string(&e)?);
                text.push('\n');
            }
            std::fs::write(out, text)?;
        }
    }
    Ok(())
}
