//! Real-time WebSocket service. Each connection owns one simulation running
//! on its own thread at wall-clock pace; the filter runs there, so the client
//! only ever renders.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, TryRecvError};
use std::sync::Arc;
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{ConnectInfo, State};
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures_util::{SinkExt, StreamExt};
use misc_core::filter::{Controller, FilterSettings};
use misc_core::invariance::{system_hash, CisAtlas};
use misc_core::world::{
    write_replay, Environment, Observation, SimConfig, Simulation, UserInput, UserPolicy, CLOCK_HZ, FRAME_PERIOD,
};
use tokio::net::TcpListener;
use tokio::sync::broadcast;

use crate::protocol::{
    ClientMessage, ControlCmd, ServerMessage, SessionDescriptor, StateMessage, PROTOCOL_ERROR, PROTOCOL_ERROR_CODE,
};

/// Frames buffered per connection before the oldest are dropped.
const FRAME_QUEUE: usize = 32;

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub env: Environment,
    pub atlas: CisAtlas,
    pub filter: FilterSettings,
    /// Directory for replay files; `None` disables recording.
    pub record_dir: Option<PathBuf>,
    /// Assist state of a fresh session.
    pub assist: bool,
    /// Inputs older than this are treated as a centred stick.
    pub input_timeout: Duration,
    /// Simulated seconds per wall-clock second.
    pub time_scale: f64,
    pub max_ticks: u64,
}

impl ServerConfig {
    pub fn new(env: Environment, atlas: CisAtlas) -> Self {
        Self {
            env,
            atlas,
            filter: FilterSettings::real_time(),
            record_dir: Some(PathBuf::from("recordings")),
            assist: true,
            input_timeout: Duration::from_millis(500),
            time_scale: 1.0,
            max_ticks: SimConfig::default().max_ticks,
        }
    }
}

struct AppState {
    config: ServerConfig,
    env_hash: String,
    next_id: AtomicU64,
}

/// Refuses an atlas that was not built for this environment.
pub fn router(config: ServerConfig) -> anyhow::Result<Router> {
    config.atlas.check_matches(&config.env)?;
    if !(config.time_scale > 0.0) {
        anyhow::bail!("time scale must be positive");
    }
    if let Some(dir) = &config.record_dir {
        std::fs::create_dir_all(dir)?;
    }
    let state = Arc::new(AppState {
        env_hash: system_hash(&config.env.system(), &config.env),
        config,
        next_id: AtomicU64::new(1),
    });
    Ok(Router::new()
        .route("/session", get(upgrade))
        .route("/healthz", get(|| async { "ok" }))
        .with_state(state))
}

pub async fn serve(config: ServerConfig, listener: TcpListener) -> anyhow::Result<()> {
    let app = router(config)?;
    axum::serve(listener, app.into_make_service_with_connect_info::<SocketAddr>()).await?;
    Ok(())
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<Arc<AppState>>, ConnectInfo(peer): ConnectInfo<SocketAddr>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| session(socket, state, peer))
}

/// What the network side tells the simulation thread.
enum Command {
    Input { ax: f64, ay: f64, assist: bool },
    Control(ControlCmd),
    Closed,
}

/// What the simulation thread publishes.
#[derive(Clone)]
enum Outgoing {
    Text(Arc<str>),
    Close(u16, &'static str),
}

async fn session(socket: WebSocket, state: Arc<AppState>, peer: SocketAddr) {
    let id = state.next_id.fetch_add(1, Ordering::Relaxed);
    let cfg = &state.config;
    let descriptor = SessionDescriptor {
        session_id: id,
        env_hash: state.env_hash.clone(),
        atlas_hash: cfg.atlas.system_hash.clone(),
        assist: cfg.assist,
        started_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        client: peer.to_string(),
    };
    tracing::info!(target: "misc::serve", session = id, %peer, "session opened");
    let (mut sink, mut stream) = socket.split();
    let layout = ServerMessage::layout(descriptor, cfg.env.clone()).to_json();
    if sink.send(Message::Text(layout.into())).await.is_err() {
        return;
    }

    let (cmd_tx, cmd_rx) = mpsc::channel::<Command>();
    let (out_tx, mut out_rx) = broadcast::channel::<Outgoing>(FRAME_QUEUE);
    let (close_tx, mut close_rx) = tokio::sync::mpsc::channel::<(u16, &'static str)>(1);
    let loop_state = state.clone();
    let sim_thread = std::thread::Builder::new()
        .name(format!("session-{id}"))
        .spawn(move || session_loop(&loop_state.config, id, cmd_rx, out_tx))
        .expect("spawn session thread");

    let writer = tokio::spawn(async move {
        loop {
            tokio::select! {
                // A pending protocol-error close wins over frames and over the
                // simulation thread shutting down, which it triggers.
                biased;
                Some((code, reason)) = close_rx.recv() => {
                    let _ = sink.send(Message::Close(Some(CloseFrame { code, reason: reason.into() }))).await;
                    break;
                }
                msg = out_rx.recv() => match msg {
                    Ok(Outgoing::Text(s)) => {
                        if sink.send(Message::Text(s.as_ref().into())).await.is_err() {
                            break;
                        }
                    }
                    Ok(Outgoing::Close(code, reason)) => {
                        let _ = sink.send(Message::Close(Some(CloseFrame { code, reason: reason.into() }))).await;
                        break;
                    }
                    // Drop-oldest: a slow client just misses frames.
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        tracing::debug!(target: "misc::serve", session = id, dropped = n, "frames dropped");
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                },
            }
        }
    });

    let mut last_seq: Option<u64> = None;
    while let Some(msg) = stream.next().await {
        let violation = match msg {
            Ok(Message::Text(text)) => match ClientMessage::parse(text.as_str()) {
                Ok(ClientMessage::Input { ax, ay, assist, seq }) => {
                    if last_seq.is_some_and(|s| seq <= s) {
                        Some(format!("seq {seq} not increasing"))
                    } else {
                        last_seq = Some(seq);
                        let _ = cmd_tx.send(Command::Input { ax, ay, assist });
                        None
                    }
                }
                Ok(ClientMessage::Control { cmd }) => {
                    let _ = cmd_tx.send(Command::Control(cmd));
                    None
                }
                Err(e) => Some(e),
            },
            Ok(Message::Binary(_)) => Some("binary message".into()),
            Ok(Message::Close(_)) | Err(_) => break,
            Ok(_) => None,
        };
        if let Some(why) = violation {
            tracing::warn!(target: "misc::serve", session = id, %why, "protocol violation");
            let _ = close_tx.send((PROTOCOL_ERROR_CODE, PROTOCOL_ERROR)).await;
            break;
        }
    }
    let _ = cmd_tx.send(Command::Closed);
    let _ = writer.await;
    let _ = tokio::task::spawn_blocking(move || sim_thread.join()).await;
    tracing::info!(target: "misc::serve", session = id, "session closed");
}

/// Zero-order hold of the latest client input, read once per control tick.
struct LiveInput {
    rx: Receiver<Command>,
    amax: f64,
    u: [f64; 2],
    assist: bool,
    last_input: Option<Instant>,
    timeout: Duration,
    events: Vec<Command>,
}

/// Only the first run of a connection starts on a bare input; later runs
/// need an explicit `start` or `reset`.
fn wants_start(events: &[Command], first_run: bool, touched: bool) -> bool {
    events.iter().any(|e| matches!(e, Command::Control(ControlCmd::Start | ControlCmd::Reset))) || (first_run && touched)
}

impl LiveInput {
    fn drain(&mut self) {
        loop {
            match self.rx.try_recv() {
                Ok(c) => self.apply(c),
                Err(TryRecvError::Empty) => break,
                Err(TryRecvError::Disconnected) => {
                    self.events.push(Command::Closed);
                    break;
                }
            }
        }
    }

    fn apply(&mut self, c: Command) {
        match c {
            Command::Input { ax, ay, assist } => {
                self.u = [ax * self.amax, ay * self.amax];
                self.assist = assist;
                self.last_input = Some(Instant::now());
            }
            Command::Control(ControlCmd::ToggleAssist) => self.assist = !self.assist,
            other => self.events.push(other),
        }
    }

    /// Blocks up to `wait` for the next command when no simulation is running.
    fn wait(&mut self, wait: Duration) {
        match self.rx.recv_timeout(wait) {
            Ok(c) => self.apply(c),
            Err(RecvTimeoutError::Timeout) => {}
            Err(RecvTimeoutError::Disconnected) => self.events.push(Command::Closed),
        }
        self.drain();
    }
}

impl UserPolicy for LiveInput {
    fn name(&self) -> &str {
        "live"
    }

    fn input(&mut self, _obs: &Observation<'_>) -> UserInput {
        self.drain();
        let fresh = self.last_input.is_some_and(|t| t.elapsed() <= self.timeout);
        UserInput {
            u: if fresh { self.u } else { [0.0; 2] },
            assist: Some(self.assist),
        }
    }
}

fn session_loop(cfg: &ServerConfig, id: u64, rx: Receiver<Command>, out: broadcast::Sender<Outgoing>) {
    let publish = |m: ServerMessage| {
        let _ = out.send(Outgoing::Text(m.to_json().into()));
    };
    let period = Duration::from_secs_f64(FRAME_PERIOD as f64 / CLOCK_HZ as f64 / cfg.time_scale);
    let mut live = LiveInput {
        rx,
        amax: cfg.env.limits.amax,
        u: [0.0; 2],
        assist: cfg.assist,
        last_input: None,
        timeout: cfg.input_timeout,
        events: Vec::new(),
    };
    let mut sim: Option<Simulation> = None;
    let mut run = 0u32;
    let mut next_tick = 0u64;
    let mut deadline = Instant::now();

    let new_sim = |assist: bool| -> Result<Simulation, String> {
        let controller = Controller::new(&cfg.env, &cfg.atlas, cfg.filter).map_err(|e| e.to_string())?;
        let config = SimConfig {
            max_ticks: cfg.max_ticks,
            stop_on_completion: true,
            log_ticks: false,
            record_inputs: cfg.record_dir.is_some(),
        };
        Simulation::new(cfg.env.clone(), Some(controller), assist, config).map_err(|e| e.to_string())
    };
    let finish = |s: &mut Simulation, run: u32| {
        let replay = cfg.record_dir.as_ref().and_then(|dir| {
            let path = dir.join(format!("session-{id}-run-{run}.replay.csv"));
            let inputs = s.take_recorded_inputs();
            let written = std::fs::File::create(&path).map_err(|e| e.to_string()).and_then(|f| write_replay(&inputs, f).map_err(|e| e.to_string()));
            match written {
                Ok(()) => Some(path.display().to_string()),
                Err(e) => {
                    tracing::error!(target: "misc::serve", session = id, error = %e, "could not write replay");
                    None
                }
            }
        });
        publish(ServerMessage::End { metrics: s.metrics(), replay });
    };

    loop {
        let Some(s) = sim.as_mut() else {
            live.wait(period);
            if live.events.iter().any(|e| matches!(e, Command::Closed)) {
                return;
            }
            let start = wants_start(&live.events, run == 0, live.last_input.is_some());
            live.events.clear();
            if start {
                match new_sim(live.assist) {
                    Ok(s) => sim = Some(s),
                    Err(e) => {
                        tracing::error!(target: "misc::serve", session = id, error = %e, "cannot start");
                        let _ = out.send(Outgoing::Close(1011, "internal-error"));
                        return;
                    }
                }
                run += 1;
                deadline = Instant::now();
            }
            continue;
        };

        let frame = match s.advance_frame(&mut live) {
            Ok(f) => f,
            Err(e) => {
                tracing::error!(target: "misc::serve", session = id, error = %e, "simulation fault");
                finish(s, run);
                let _ = out.send(Outgoing::Close(1011, "internal-error"));
                return;
            }
        };
        publish(ServerMessage::State(StateMessage::from_frame(&frame, next_tick)));
        next_tick += 1;

        let mut closed = false;
        let mut reset = false;
        for e in live.events.drain(..) {
            match e {
                Command::Closed => closed = true,
                Command::Control(ControlCmd::Reset) => reset = true,
                _ => {}
            }
        }
        if closed {
            finish(s, run);
            return;
        }
        if s.is_finished() {
            publish(ServerMessage::State(StateMessage::from_frame(&s.frame(), next_tick)));
            next_tick += 1;
            finish(s, run);
            sim = None;
            continue;
        }
        if reset {
            finish(s, run);
            match new_sim(live.assist) {
                Ok(fresh) => *s = fresh,
                Err(_) => return,
            }
            run += 1;
        }

        deadline += period;
        let now = Instant::now();
        if deadline > now {
            std::thread::sleep(deadline - now);
        } else if now - deadline > 10 * period {
            // Fell far behind (debugger, overload): resynchronise instead of bursting.
            deadline = now;
        }
    }
}
