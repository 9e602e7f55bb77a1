use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::Duration;

use clap::Parser;
use harmonica_service::{router, spawn_eviction, AppState, Config, DEFAULT_PORT};

#[derive(Debug, Parser)]
#[command(name = "harmonica-serve", version, about = "HTTP service for interactive deformation")]
struct Args {
    #[arg(long, default_value_t = DEFAULT_PORT)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory served under /ui.
    #[arg(long, env = "HARMONICA_UI_DIR")]
    ui_dir: Option<PathBuf>,
    /// Minutes of inactivity before a session is dropped.
    #[arg(long, default_value_t = 30)]
    idle_minutes: u64,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    tracing_subscriber::fmt::init();
    let args = Args::parse();
    let mut config = Config::default();
    if let Some(dir) = args.ui_dir {
        config.ui_dir = dir;
    }
    config.idle_timeout = Duration::from_secs(args.idle_minutes * 60);
    let state = AppState::new(config);
    spawn_eviction(state.clone(), Duration::from_secs(60));
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, e))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, "listening");
    axum::serve(listener, router(state)).await
}
