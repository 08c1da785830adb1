//! WebSocket gateway for live sessions.
//!
//! Routes: `/ws` for sessions, `/health` for liveness and session count, and
//! the configured static directory for everything else.

pub mod buffers;
pub mod protocol;
mod session;

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::{State, WebSocketUpgrade};
use axum::response::IntoResponse;
use axum::routing::get;
use axum::{Json, Router};
use duplex_core::Config;
use tokio::net::TcpListener;
use tokio::sync::watch;
use tower_http::services::ServeDir;

pub use protocol::{ByeReason, ClientMessage, Envelope, ErrorCode, ServerMessage, SvProfile};
pub use session::live_backends;

pub(crate) struct Shared {
    pub(crate) config: Config,
    pub(crate) sessions: AtomicUsize,
}

#[derive(Clone)]
struct AppState {
    shared: Arc<Shared>,
    shutdown: watch::Receiver<bool>,
}

pub struct Gateway {
    shared: Arc<Shared>,
    shutdown: watch::Sender<bool>,
}

impl Gateway {
    pub fn new(config: Config) -> Self {
        Self {
            shared: Arc::new(Shared {
                config,
                sessions: AtomicUsize::new(0),
            }),
            shutdown: watch::Sender::new(false),
        }
    }

    pub fn config(&self) -> &Config {
        &self.shared.config
    }

    pub fn sessions(&self) -> usize {
        self.shared.sessions.load(Ordering::SeqCst)
    }

    pub fn router(&self) -> Router {
        let state = AppState {
            shared: self.shared.clone(),
            shutdown: self.shutdown.subscribe(),
        };
        let router = Router::new()
            .route("/ws", get(ws_handler))
            .route("/health", get(health))
            .with_state(state);
        match &self.shared.config.gateway.static_dir {
            Some(dir) => router.fallback_service(ServeDir::new(dir)),
            None => router,
        }
    }

    /// Tells every session to say goodbye and stops accepting connections.
    pub fn shutdown(&self) {
        self.shutdown.send_replace(true);
    }

    /// A handle that triggers [`Gateway::shutdown`] from elsewhere.
    pub fn shutdown_handle(&self) -> ShutdownHandle {
        ShutdownHandle(self.shutdown.clone())
    }

    /// Serves until shutdown, then waits briefly for sessions to flush.
    pub async fn serve(self, listener: TcpListener) -> std::io::Result<()> {
        let mut rx = self.shutdown.subscribe();
        axum::serve(listener, self.router())
            .with_graceful_shutdown(async move {
                let _ = rx.wait_for(|s| *s).await;
            })
            .await?;
        for _ in 0..100 {
            if self.sessions() == 0 {
                break;
            }
            tokio::time::sleep(Duration::from_millis(20)).await;
        }
        Ok(())
    }
}

#[derive(Clone)]
pub struct ShutdownHandle(watch::Sender<bool>);

impl ShutdownHandle {
    pub fn shutdown(&self) {
        self.0.send_replace(true);
    }
}

/// Binds `port` on all interfaces and serves until Ctrl-C.
pub async fn run(config: Config, port: u16) -> std::io::Result<()> {
    let listener = TcpListener::bind(SocketAddr::from(([0, 0, 0, 0], port))).await?;
    tracing::info!(addr = %listener.local_addr()?, "gateway listening");
    let gateway = Gateway::new(config);
    let handle = gateway.shutdown_handle();
    tokio::spawn(async move {
        if tokio::signal::ctrl_c().await.is_ok() {
            handle.shutdown();
        }
    });
    gateway.serve(listener).await
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session::run(socket, state.shared, state.shutdown))
}

async fn health(State(state): State<AppState>) -> impl IntoResponse {
    Json(serde_json::json!({
        "status": "ok",
        "sessions": state.shared.sessions.load(Ordering::SeqCst),
    }))
}
