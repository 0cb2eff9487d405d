use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use fieldledger_sim::{simulate, PlannedEvent, Scenario};

/// Replays an event file through SDK instances over a scenario's link
/// conditions and prints the delivery report.
#[derive(Parser)]
#[command(version)]
struct Args {
    #[arg(long)]
    scenario: PathBuf,
    /// NDJSON of planned events, as written by `fieldledger-sim plan`.
    #[arg(long)]
    events: PathBuf,
    #[arg(long, default_value = "http://localhost:8080")]
    server: String,
}

fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let scenario = Scenario::load(&args.scenario)?;
    let text = std::fs::read_to_string(&args.events)?;
    let mut plan = Vec::new();
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let event: PlannedEvent =
            serde_json::from_str(line).with_context(|| format!("{}:{}", args.events.display(), n + 1))?;
        plan.push(event);
    }
    plan.sort_by(|a, b| (a.t_ms, &a.user_id).cmp(&(b.t_ms, &b.user_id)));
    let report = simulate(&scenario, &plan, &args.server)?;
    print!("{}", report.to_json());
    Ok(())
}
