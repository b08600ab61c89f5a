mod common;

use std::time::{Duration, Instant};

use common::*;
use futures_util::{SinkExt, StreamExt};
use misc_core::filter::FilterSettings;
use misc_core::world::{default_environment, parse_replay, run_session, write_trajectory_csv, Replay, SimConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tokio_tungstenite::tungstenite::protocol::frame::coding::CloseCode;
use tokio_tungstenite::tungstenite::Message;

#[tokio::test(flavor = "multi_thread")]
async fn layout_then_states_with_increasing_ticks() {
    let addr = start(ServerConfig { time_scale: 4.0, ..config() }).await;
    let (mut ws, layout) = connect(addr).await;
    let env = default_environment();
    assert_eq!(layout["environment"]["obstacles"].as_array().unwrap().len(), 5);
    assert_eq!(layout["environment"]["start"], json!(env.start));
    assert_eq!(layout["control_hz"], 50.0);
    assert_eq!(layout["frame_hz"], 30.0);
    assert_eq!(layout["session"]["env_hash"], layout["session"]["atlas_hash"]);

    control(&mut ws, "start").await;
    let mut last: Option<u64> = None;
    for k in 0..90u64 {
        input(&mut ws, 0.3, -0.2, true, k).await;
        let s = next_state(&mut ws).await.unwrap();
        for key in ["t", "x", "y", "vx", "vy", "intervention", "goal_index", "goals_done", "collisions", "solve_ms"] {
            assert!(s[key].is_number(), "{key} missing in {s}");
        }
        assert_eq!(s["u_user"].as_array().unwrap().len(), 2);
        let tick = s["tick"].as_u64().unwrap();
        assert!(last.is_none_or(|l| tick > l));
        last = Some(tick);
    }
    ws.close(None).await.unwrap();
}

#[tokio::test(flavor = "multi_thread")]
async fn inputs_are_scaled_and_filtered_on_the_server() {
    let addr = start(config()).await;
    let (mut ws, _) = connect(addr).await;
    input(&mut ws, 0.5, 0.0, true, 0).await;
    let mut seen = false;
    for _ in 0..30 {
        let s = next_state(&mut ws).await.unwrap();
        if s["u_user"][0] == 20.0 {
            seen = true;
            assert!(s["mode"] == "pass_through" || s["mode"] == "corrected");
        }
    }
    assert!(seen);
}

#[tokio::test(flavor = "multi_thread")]
async fn assist_toggle_shows_up_in_the_next_frames() {
    let addr = start(config()).await;
    let (mut ws, _) = connect(addr).await;
    control(&mut ws, "start").await;
    for _ in 0..10 {
        assert_eq!(next_state(&mut ws).await.unwrap()["assist"], true);
    }
    control(&mut ws, "toggle_assist").await;
    let mut frames = Vec::new();
    for _ in 0..20 {
        frames.push(next_state(&mut ws).await.unwrap());
    }
    let flip = frames.iter().position(|f| f["assist"] == false).expect("assist never turned off");
    // Frames already in flight when the message arrived may still show the old state.
    assert!(flip <= 3, "took {flip} frames");
    for f in &frames[flip + 1..] {
        assert_eq!(f["assist"], false);
        assert_eq!(f["mode"], "off");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn silent_client_gets_a_centred_stick() {
    let addr = start(config()).await;
    let (mut ws, _) = connect(addr).await;
    input(&mut ws, 1.0, 0.0, true, 0).await;
    let t0 = Instant::now();
    let mut early = Vec::new();
    let mut late = Vec::new();
    while t0.elapsed() < Duration::from_millis(1200) {
        let s = next_state(&mut ws).await.unwrap();
        let elapsed = t0.elapsed();
        if elapsed < Duration::from_millis(300) {
            early.push(s["u_user"][0].as_f64().unwrap());
        } else if elapsed > Duration::from_millis(800) {
            late.push(s["u_user"][0].as_f64().unwrap());
        }
    }
    assert!(early.contains(&40.0));
    assert!(!late.is_empty() && late.iter().all(|&u| u == 0.0), "{late:?}");
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_sessions_are_independent() {
    let addr = start(ServerConfig { time_scale: 2.0, ..config() }).await;
    let (mut a, la) = connect(addr).await;
    let (mut b, lb) = connect(addr).await;
    assert_ne!(la["session"]["session_id"], lb["session"]["session_id"]);
    control(&mut a, "start").await;
    control(&mut b, "start").await;
    let (mut xa, mut xb) = (0.0, 0.0);
    for k in 0..45 {
        input(&mut a, 1.0, 0.0, true, k).await;
        input(&mut b, 0.0, 0.0, true, k).await;
        xa = next_state(&mut a).await.unwrap()["x"].as_f64().unwrap();
        xb = next_state(&mut b).await.unwrap()["x"].as_f64().unwrap();
    }
    let start_x = default_environment().start[0];
    assert!(xa > start_x + 1.0, "a at {xa}");
    assert_eq!(xb, start_x);
}

async fn expect_protocol_close(mut ws: Ws) {
    loop {
        match tokio::time::timeout(Duration::from_secs(10), ws.next()).await.expect("no close") {
            Some(Ok(Message::Close(Some(frame)))) => {
                assert_eq!(frame.code, CloseCode::from(4000));
                assert_eq!(frame.reason.as_str(), "protocol-error");
                return;
            }
            Some(Ok(_)) => continue,
            other => panic!("expected a close frame, got {other:?}"),
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn protocol_violations_close_the_session() {
    let addr = start(config()).await;

    let (mut ws, _) = connect(addr).await;
    ws.send(Message::Text("{not json".into())).await.unwrap();
    expect_protocol_close(ws).await;

    let (mut ws, _) = connect(addr).await;
    send(&mut ws, json!({"type": "teleport", "x": 1})).await;
    expect_protocol_close(ws).await;

    let (mut ws, _) = connect(addr).await;
    ws.send(Message::Binary(vec![1u8, 2, 3].into())).await.unwrap();
    expect_protocol_close(ws).await;

    let (mut ws, _) = connect(addr).await;
    input(&mut ws, 0.0, 0.0, true, 5).await;
    input(&mut ws, 0.0, 0.0, true, 5).await;
    expect_protocol_close(ws).await;

    // The server keeps serving other clients.
    let (mut ws, _) = connect(addr).await;
    control(&mut ws, "start").await;
    assert!(next_state(&mut ws).await.is_some());
}

/// Reads messages until an `end` arrives, keeping the states.
async fn collect_until_end(ws: &mut Ws, states: &mut Vec<Value>) -> Value {
    loop {
        let v = next_json(ws).await.expect("closed before end");
        match v["type"].as_str() {
            Some("state") => states.push(v),
            Some("end") => return v,
            _ => {}
        }
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn out_of_range_fuzz_never_breaks_safety() {
    let addr = start(ServerConfig { time_scale: 6.0, max_ticks: 1500, ..config() }).await;
    let (mut ws, _) = connect(addr).await;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    control(&mut ws, "start").await;
    let mut states = Vec::new();
    let (tx_ws, mut rx_ws) = ws.split();
    // Writer floods inputs while the reader drains frames.
    let writer = tokio::spawn(async move {
        let mut tx = tx_ws;
        for seq in 0..4000u64 {
            let (ax, ay) = (rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0));
            let msg = json!({"type": "input", "ax": ax, "ay": ay, "assist": true, "seq": seq});
            if tx.send(Message::Text(msg.to_string().into())).await.is_err() {
                break;
            }
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
        tx
    });
    let end = loop {
        let msg = tokio::time::timeout(Duration::from_secs(60), rx_ws.next()).await.unwrap().unwrap().unwrap();
        if let Message::Text(t) = msg {
            let v: Value = serde_json::from_str(t.as_str()).unwrap();
            if v["type"] == "end" {
                break v;
            }
            states.push(v);
        }
    };
    writer.abort();
    let m = &end["metrics"];
    assert_eq!(m["control_ticks"], 1500);
    assert_eq!(m["collisions"], 0);
    assert_eq!(m["violations"], 0);
    assert_eq!(m["infeasible"], 0);
    assert!(m["corrected_ticks"].as_u64().unwrap() > 100);
    let env = default_environment();
    for s in &states {
        let p = [s["x"].as_f64().unwrap(), s["y"].as_f64().unwrap()];
        assert!(env.clearance(p) >= -1e-6, "frame {s}");
        assert!(s["u_applied"].as_array().unwrap().iter().all(|u| u.as_f64().unwrap().abs() <= 40.0));
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn recorded_sessions_replay_identically() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config();
    cfg.record_dir = Some(dir.path().to_path_buf());
    cfg.filter = FilterSettings::default();
    cfg.time_scale = 5.0;
    cfg.max_ticks = 1000;
    let addr = start(cfg).await;
    let (mut ws, _) = connect(addr).await;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut states = Vec::new();
    control(&mut ws, "start").await;
    // A few frames with a toggle in the middle, then let it run out.
    for seq in 0..60u64 {
        input(&mut ws, rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), seq < 20 || seq >= 40, seq).await;
        states.push(next_state(&mut ws).await.unwrap());
    }
    let end = collect_until_end(&mut ws, &mut states).await;
    let path = end["replay"].as_str().expect("recording on").to_string();

    let records = parse_replay(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(records.len(), 1000);
    assert!(records.iter().any(|r| !r.assist));
    let env = default_environment();
    let mut replay = Replay::new(records.clone());
    let offline = run_session(
        &env,
        Some(atlas()),
        &mut replay,
        records[0].assist,
        SimConfig { max_ticks: 1000, ..SimConfig::default() },
        FilterSettings::default(),
    )
    .unwrap();
    assert_eq!(serde_json::to_value(&offline.metrics).unwrap(), end["metrics"]);
    // Every frame the client saw matches the offline frame bit for bit.
    for s in &states {
        let f = &offline.frames[s["tick"].as_u64().unwrap() as usize];
        assert_eq!(s["x"].as_f64().unwrap().to_bits(), f.x.to_bits());
        assert_eq!(s["y"].as_f64().unwrap().to_bits(), f.y.to_bits());
        assert_eq!(s["vx"].as_f64().unwrap().to_bits(), f.vx.to_bits());
        assert_eq!(s["u_applied"][0].as_f64().unwrap().to_bits(), f.u_applied[0].to_bits());
    }
    let mut buf = Vec::new();
    write_trajectory_csv(&offline.frames, &mut buf).unwrap();
    assert!(!buf.is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn reset_ends_the_run_and_ticks_keep_growing() {
    let addr = start(ServerConfig { time_scale: 4.0, ..config() }).await;
    let (mut ws, _) = connect(addr).await;
    control(&mut ws, "start").await;
    let mut states = Vec::new();
    for _ in 0..10 {
        states.push(next_state(&mut ws).await.unwrap());
    }
    control(&mut ws, "reset").await;
    let end = collect_until_end(&mut ws, &mut states).await;
    assert!(end["metrics"]["control_ticks"].as_u64().unwrap() > 0);
    assert!(end["replay"].is_null());
    for _ in 0..10 {
        states.push(next_state(&mut ws).await.unwrap());
    }
    let ticks: Vec<u64> = states.iter().map(|s| s["tick"].as_u64().unwrap()).collect();
    assert!(ticks.windows(2).all(|w| w[0] < w[1]), "{ticks:?}");
    // The second run starts over from the start position.
    assert!(states.iter().skip(10).any(|s| s["t"] == 0.0));
}

#[tokio::test(flavor = "multi_thread")]
async fn mismatched_atlas_is_refused() {
    let mut env = default_environment();
    env.gamma = 0.2;
    let cfg = ServerConfig::new(env, atlas().clone());
    assert!(misc_cli::router(cfg).is_err());
}

#[tokio::test(flavor = "multi_thread")]
async fn health_check_answers_ok() {
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let addr = start(config()).await;
    let mut s = tokio::net::TcpStream::connect(addr).await.unwrap();
    s.write_all(b"GET /healthz HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n").await.unwrap();
    let mut body = String::new();
    s.read_to_string(&mut body).await.unwrap();
    assert!(body.starts_with("HTTP/1.1 200"), "{body}");
    assert!(body.ends_with("ok"));
}
