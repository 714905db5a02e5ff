//! Teleoperation server: one session per websocket connection at `/ws`, static
//! UI files on every other path.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use grasp_cascade::demonstrations::{DemoMetadata, DemoWriter};
use grasp_cascade::environment::Environment;
use grasp_cascade::teleop::{Envelope, Session, SessionConfig};
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tower_http::services::ServeDir;

const FALLBACK_PAGE: &str = include_str!("../static/index.html");

#[derive(Clone)]
pub struct ServerConfig {
    pub env: Environment,
    pub session: SessionConfig,
    /// Recorded episodes are appended here as they close.
    pub demo_out: Option<PathBuf>,
    /// UI bundle directory; a minimal built-in page is served when absent.
    pub static_dir: Option<PathBuf>,
}

struct Shared {
    config: ServerConfig,
    next_id: AtomicU64,
    writer: Mutex<Option<DemoWriter<BufWriter<File>>>>,
}

pub fn router(config: ServerConfig) -> grasp_cascade::Result<Router> {
    let writer = match &config.demo_out {
        Some(p) => {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map_or(0, |d| d.as_secs());
            let meta = DemoMetadata::for_env(&config.env, "teleop", now);
            Some(DemoWriter::create(p, &meta)?)
        }
        None => None,
    };
    let static_dir = config.static_dir.clone();
    let shared = Arc::new(Shared {
        config,
        next_id: AtomicU64::new(1),
        writer: Mutex::new(writer),
    });
    let app = Router::new().route("/ws", get(upgrade)).with_state(shared);
    Ok(match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(|| async { Html(FALLBACK_PAGE) })),
    })
}

pub async fn serve(listener: TcpListener, config: ServerConfig) -> std::io::Result<()> {
    let app = router(config).map_err(std::io::Error::other)?;
    axum::serve(listener, app).await
}

async fn upgrade(ws: WebSocketUpgrade, State(shared): State<Arc<Shared>>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| run_session(socket, shared))
}

fn encode(e: &Envelope) -> Message {
    Message::Text(serde_json::to_string(e).expect("envelopes serialize").into())
}

async fn run_session(socket: WebSocket, shared: Arc<Shared>) {
    let id = shared.next_id.fetch_add(1, Ordering::Relaxed);
    let cfg = &shared.config;
    let mut session = match Session::new(id, cfg.env.clone(), cfg.session.clone()) {
        Ok(s) => s,
        Err(e) => {
            log::error!("session {id}: {e}");
            return;
        }
    };
    let (mut sink, mut stream) = socket.split();
    // reads are queued and applied at tick boundaries
    let (tx, mut rx) = mpsc::unbounded_channel::<String>();
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = stream.next().await {
            match msg {
                Message::Text(t) => {
                    if tx.send(t.to_string()).is_err() {
                        break;
                    }
                }
                Message::Close(_) => break,
                _ => {}
            }
        }
    });
    log::info!("session {id} opened");
    let hello = session.hello();
    if sink.send(encode(&hello)).await.is_err() {
        return;
    }
    let mut clock = tokio::time::interval(Duration::from_secs_f64(1.0 / session.config.tick_hz));
    clock.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    'ticks: loop {
        clock.tick().await;
        let mut closed = false;
        let mut out = Vec::new();
        loop {
            match rx.try_recv() {
                Ok(text) => out.extend(session.handle_text(&text)),
                Err(mpsc::error::TryRecvError::Empty) => break,
                Err(mpsc::error::TryRecvError::Disconnected) => {
                    closed = true;
                    break;
                }
            }
        }
        match session.tick() {
            Ok(update) => out.push(update),
            Err(e) => out.push(session.error(e.to_string(), None)),
        }
        for ep in session.take_episodes() {
            let mut guard = shared.writer.lock().expect("demo writer lock");
            if let Some(w) = guard.as_mut() {
                match w.append(&ep) {
                    Ok(()) => log::info!("session {id}: wrote episode of {} steps", ep.len()),
                    Err(e) => log::error!("session {id}: demo write failed: {e}"),
                }
            }
        }
        for e in &out {
            if sink.send(encode(e)).await.is_err() {
                break 'ticks;
            }
        }
        if closed {
            break;
        }
    }
    reader.abort();
    log::info!("session {id} closed");
}
