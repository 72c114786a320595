//! Standalone mock server binary for desk runs against a fixed port.

use clap::Parser;
use persona_audit_mock::{MockConfig, MockServer};

#[derive(Parser)]
#[command(about = "Deterministic OpenAI-compatible mock endpoints")]
struct Args {
    /// Port to listen on (0 picks an ephemeral port).
    #[arg(long, default_value_t = 8700)]
    port: u16,
    /// Artificial latency per response, in milliseconds.
    #[arg(long, default_value_t = 0)]
    latency_ms: u64,
    /// Fail the first N requests with HTTP 503.
    #[arg(long, default_value_t = 0)]
    fail_first: u64,
    /// Fail every request with this HTTP status.
    #[arg(long)]
    always_status: Option<u16>,
    /// Share of Spanish answers for explicit Hispanic prompts.
    #[arg(long, default_value_t = 0.2)]
    spanish_share: f64,
    /// Share of open-ended answers voiced as an AI assistant.
    #[arg(long, default_value_t = 0.0)]
    violation_share: f64,
    /// Embedding dimensionality.
    #[arg(long, default_value_t = 16)]
    embed_dim: usize,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let args = Args::parse();
    let config = MockConfig {
        latency_ms: args.latency_ms,
        fail_first: args.fail_first,
        always_status: args.always_status,
        spanish_share: args.spanish_share,
        violation_share: args.violation_share,
        embed_dim: args.embed_dim,
    };
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", args.port)).await?;
    let server = MockServer::serve_on(listener, config)?;
    println!("mock server listening on {}", server.base_url());
    tokio::signal::ctrl_c().await?;
    Ok(())
}
