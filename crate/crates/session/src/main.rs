use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::Parser;
use valign_session::{router, system_clock, AppState, Store};

#[derive(Parser, Debug)]
#[command(version, about = "Serve interactive missions over HTTP")]
struct Cli {
    #[arg(long, default_value = "127.0.0.1")]
    bind: IpAddr,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Directory holding the session journals.
    #[arg(long, env = "VALIGN_DATA_DIR", default_value = "session-data")]
    data_dir: PathBuf,
    /// Seconds between clock events pushed to subscribers.
    #[arg(long, default_value_t = 1.0)]
    tick: f64,
}

async fn serve(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    if !(cli.tick.is_finite() && cli.tick > 0.0) {
        return Err(format!("--tick must be positive, got {}", cli.tick).into());
    }
    let (store, stored) = Store::open(&cli.data_dir)?;
    let restored = stored.len();
    let state = AppState::new(store, stored, system_clock(), Duration::from_secs_f64(cli.tick))?;

    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut every = tokio::time::interval(sweeper.tick());
        loop {
            every.tick().await;
            if let Err(e) = sweeper.sweep().await {
                eprintln!("{}", serde_json::json!({ "error": "sweep", "message": e.to_string() }));
            }
        }
    });

    let listener = tokio::net::TcpListener::bind((cli.bind, cli.port)).await?;
    eprintln!(
        "{}",
        serde_json::json!({
            "listening": listener.local_addr()?.to_string(),
            "data_dir": cli.data_dir,
            "restored_sessions": restored,
        })
    );
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

#[tokio::main]
async fn main() -> ExitCode {
    match serve(Cli::parse()).await {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({ "error": "startup", "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
