use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;

use fieldledger_ingest::{build_router, ServerConfig};

/// Ingestion and query API server.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// Store root.
    #[arg(long, env = "FL_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[arg(long, env = "FL_PORT", default_value_t = 8080)]
    port: u16,
    /// Maximum events per batch.
    #[arg(long, env = "FL_BATCH_LIMIT", default_value_t = 100)]
    batch_limit: usize,
    /// Static assets served at /console/.
    #[arg(long, env = "FL_CONSOLE_DIR", default_value = "console")]
    console_dir: PathBuf,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let config = ServerConfig {
        data_dir: args.data_dir,
        batch_limit: args.batch_limit,
        console_dir: args.console_dir,
    };
    let (app, service) = build_router(&config)?;
    let listener = tokio::net::TcpListener::bind(("0.0.0.0", args.port))
        .await
        .with_context(|| format!("binding port {}", args.port))?;
    eprintln!(
        "fieldledger-ingest listening on {} ({} events indexed, data dir {})",
        listener.local_addr()?,
        service.event_count(),
        config.data_dir.display()
    );
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
