#![allow(dead_code)]

use std::net::SocketAddr;
use std::sync::OnceLock;
use std::time::Duration;

use futures_util::{SinkExt, StreamExt};
pub use misc_cli::ServerConfig;
use misc_core::invariance::{build_atlas, CisAtlas, CisConfig};
use misc_core::world::default_environment;
use serde_json::{json, Value};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

pub type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

pub fn atlas() -> &'static CisAtlas {
    static ATLAS: OnceLock<CisAtlas> = OnceLock::new();
    ATLAS.get_or_init(|| {
        let env = default_environment();
        build_atlas(&env.system(), &env, &CisConfig::default()).unwrap()
    })
}

pub fn config() -> ServerConfig {
    let mut c = ServerConfig::new(default_environment(), atlas().clone());
    c.record_dir = None;
    c
}

pub async fn start(config: ServerConfig) -> SocketAddr {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(misc_cli::serve(config, listener));
    addr
}

pub async fn connect(addr: SocketAddr) -> (Ws, Value) {
    let (mut ws, _) = connect_async(format!("ws://{addr}/session")).await.unwrap();
    let layout = next_json(&mut ws).await.expect("layout");
    assert_eq!(layout["type"], "layout");
    (ws, layout)
}

/// Next text message as JSON; `None` once the server closes.
pub async fn next_json(ws: &mut Ws) -> Option<Value> {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(30), ws.next()).await.expect("server went quiet")?;
        match msg.ok()? {
            Message::Text(t) => return Some(serde_json::from_str(t.as_str()).unwrap()),
            Message::Close(_) => return None,
            _ => {}
        }
    }
}

pub async fn send(ws: &mut Ws, v: Value) {
    ws.send(Message::Text(v.to_string().into())).await.unwrap();
}

pub async fn input(ws: &mut Ws, ax: f64, ay: f64, assist: bool, seq: u64) {
    send(ws, json!({"type": "input", "ax": ax, "ay": ay, "assist": assist, "seq": seq})).await;
}

pub async fn control(ws: &mut Ws, cmd: &str) {
    send(ws, json!({"type": "control", "cmd": cmd})).await;
}

/// Reads until the next `state` message, returning anything skipped.
pub async fn next_state(ws: &mut Ws) -> Option<Value> {
    loop {
        let v = next_json(ws).await?;
        if v["type"] == "state" {
            return Some(v);
        }
    }
}
