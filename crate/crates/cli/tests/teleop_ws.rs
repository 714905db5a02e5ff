use std::path::Path;
use std::time::Duration;

use futures::{SinkExt, StreamExt};
use grasp_cascade::demonstrations;
use grasp_cascade::environment::{Environment, Scene, TerminalCause};
use grasp_cascade::experiment::{ExperimentConfig, Mode, Trainer};
use grasp_cascade::kinematics::KinematicChain;
use grasp_cascade::teleop::{Envelope, ScriptedOperator, SessionConfig, StateUpdate, WireMessage, PROTOCOL_VERSION};
use grasp_cli::server::{serve, ServerConfig};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;

fn env() -> Environment {
    Environment::new(KinematicChain::generic_6r(), Scene::toy()).unwrap()
}

async fn start(demo_out: Option<&Path>, static_dir: Option<&Path>) -> std::net::SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let config = ServerConfig {
        env: env(),
        session: SessionConfig { tick_hz: 200.0, ..SessionConfig::default() },
        demo_out: demo_out.map(Path::to_path_buf),
        static_dir: static_dir.map(Path::to_path_buf),
    };
    tokio::spawn(serve(listener, config));
    addr
}

type Socket = tokio_tungstenite::WebSocketStream<tokio_tungstenite::MaybeTlsStream<TcpStream>>;

struct Client {
    ws: Socket,
    seq: u64,
    last_in: u64,
}

impl Client {
    async fn connect(addr: std::net::SocketAddr) -> Self {
        let (ws, _) = tokio_tungstenite::connect_async(format!("ws://{addr}/ws")).await.unwrap();
        Self { ws, seq: 0, last_in: 0 }
    }

    async fn send(&mut self, msg: WireMessage) -> u64 {
        self.seq += 1;
        let e = Envelope { v: PROTOCOL_VERSION, seq: self.seq, msg };
        self.ws.send(Message::Text(serde_json::to_string(&e).unwrap().into())).await.unwrap();
        self.seq
    }

    async fn recv(&mut self) -> WireMessage {
        loop {
            let m = tokio::time::timeout(Duration::from_secs(10), self.ws.next())
                .await
                .expect("server went quiet")
                .unwrap()
                .unwrap();
            if let Message::Text(t) = m {
                let e: Envelope = serde_json::from_str(&t).unwrap();
                assert!(e.seq > self.last_in, "server sequence numbers must increase");
                self.last_in = e.seq;
                return e.msg;
            }
        }
    }

    async fn next_update(&mut self) -> StateUpdate {
        loop {
            match self.recv().await {
                WireMessage::StateUpdate(u) => return *u,
                WireMessage::Error { reason, .. } => panic!("server error: {reason}"),
                _ => {}
            }
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn scripted_client_grasps_and_demo_trains() {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("teleop.jsonl");
    let addr = start(Some(&demo), None).await;
    let mut c = Client::connect(addr).await;
    match c.recv().await {
        WireMessage::Hello(h) => {
            assert_eq!(h.protocol, PROTOCOL_VERSION);
            assert_eq!(h.scene_hash, env().scene.content_hash());
        }
        other => panic!("expected Hello, got {other:?}"),
    }
    c.send(WireMessage::RecordStart).await;
    let op = ScriptedOperator::default();
    let e = env();
    let mut ticks = 0;
    let last = loop {
        let u = c.next_update().await;
        ticks += 1;
        assert!(ticks < 5000, "no grasp after {ticks} updates");
        if u.terminal.is_some() {
            break u;
        }
        for m in op.commands(&e, &u) {
            c.send(m).await;
        }
    };
    assert_eq!(last.terminal, Some(TerminalCause::Success));
    c.ws.close(None).await.unwrap();

    let set = demonstrations::load(&demo, &e).unwrap();
    assert_eq!(set.episodes.len(), 1);
    assert_eq!(set.episodes[0].len() as u32, last.step);

    let mut config = ExperimentConfig::toy();
    config.mode = Mode::Cascade;
    config.batch_steps = 256;
    config.max_steps = 512;
    config.demos = Some(demo.clone());
    let mut trainer = Trainer::new(config, e, Default::default(), Some(&set)).unwrap();
    let mut iterations = 0;
    while trainer.iterate().unwrap().is_some() {
        iterations += 1;
    }
    assert!(iterations >= 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn record_stop_writes_reported_steps() {
    let dir = tempfile::tempdir().unwrap();
    let demo = dir.path().join("teleop.jsonl");
    let addr = start(Some(&demo), None).await;
    let mut c = Client::connect(addr).await;
    c.send(WireMessage::RecordStart).await;
    let mut open = 1.0;
    loop {
        let u = c.next_update().await;
        if u.recorded_steps >= 120 {
            break;
        }
        open = 1.5 - open;
        c.send(WireMessage::SetGripper { open }).await;
    }
    let stop = c.send(WireMessage::RecordStop).await;
    let recorded = loop {
        if let WireMessage::Ack { in_reply_to, note } = c.recv().await {
            if in_reply_to == stop {
                break note.unwrap();
            }
        }
    };
    // one more update guarantees the episode has been appended
    c.next_update().await;
    let steps: usize = recorded.trim_start_matches("recorded ").trim_end_matches(" steps").parse().unwrap();
    assert!(steps >= 120);
    let set = demonstrations::load(&demo, &env()).unwrap();
    assert_eq!(set.episodes.len(), 1);
    assert_eq!(set.episodes[0].len(), steps);
}

#[tokio::test(flavor = "multi_thread")]
async fn bad_messages_get_errors_and_session_survives() {
    let addr = start(None, None).await;
    let mut c = Client::connect(addr).await;
    c.ws.send(Message::Text(r#"{"v":1,"seq":1,"type":"Teleport","body":{}}"#.into())).await.unwrap();
    c.seq = 1;
    let mut saw_error = false;
    for _ in 0..20 {
        if let WireMessage::Error { .. } = c.recv().await {
            saw_error = true;
            break;
        }
    }
    assert!(saw_error);
    let bad = c.send(WireMessage::SetTarget { position: [0.4, 0.0, 0.3], orientation: [2.0, 0.0, 0.0, 0.0] }).await;
    let reason = loop {
        if let WireMessage::Error { reason, in_reply_to } = c.recv().await {
            assert_eq!(in_reply_to, Some(bad));
            break reason;
        }
    };
    assert_eq!(reason, "invalid orientation");
    assert!(c.next_update().await.frozen);
}

async fn http_get(addr: std::net::SocketAddr, path: &str) -> String {
    let mut s = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    s.write_all(req.as_bytes()).await.unwrap();
    let mut body = String::new();
    s.read_to_string(&mut body).await.unwrap();
    body
}

#[tokio::test(flavor = "multi_thread")]
async fn serves_static_files() {
    let fallback = start(None, None).await;
    let page = http_get(fallback, "/").await;
    assert!(page.starts_with("HTTP/1.1 200"), "{page}");
    assert!(page.contains("new WebSocket"));

    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<html>bundle</html>").unwrap();
    std::fs::write(dir.path().join("app.js"), "console.log(1)").unwrap();
    let addr = start(None, Some(dir.path())).await;
    let page = http_get(addr, "/").await;
    assert!(page.starts_with("HTTP/1.1 200") && page.contains("bundle"), "{page}");
    assert!(http_get(addr, "/app.js").await.contains("console.log(1)"));
    assert!(http_get(addr, "/missing.js").await.starts_with("HTTP/1.1 404"));
}
