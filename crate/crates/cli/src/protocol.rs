//! JSON messages exchanged over `/session`. Every message is an object with
//! a `type` field.

use misc_core::world::{Environment, Frame, SessionMetrics, CLOCK_HZ, CONTROL_PERIOD, FRAME_PERIOD};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlCmd {
    Start,
    Reset,
    ToggleAssist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    /// Stick deflection in `[-1, 1]`, scaled by `amax` on the server.
    Input { ax: f64, ay: f64, assist: bool, seq: u64 },
    Control { cmd: ControlCmd },
}

impl ClientMessage {
    pub fn parse(text: &str) -> Result<Self, String> {
        let msg: ClientMessage = serde_json::from_str(text).map_err(|e| e.to_string())?;
        if let ClientMessage::Input { ax, ay, .. } = msg {
            if !ax.is_finite() || !ay.is_finite() {
                return Err("non-finite input".into());
            }
        }
        Ok(msg)
    }
}

/// Identity of one connection, sent with the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDescriptor {
    pub session_id: u64,
    pub env_hash: String,
    pub atlas_hash: String,
    pub assist: bool,
    pub started_at: u64,
    pub client: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMessage {
    pub tick: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub u_user: [f64; 2],
    pub u_applied: [f64; 2],
    pub intervention: f64,
    pub mode: String,
    pub goal_index: usize,
    pub goals_done: usize,
    pub collisions: u64,
    pub solve_ms: f64,
    pub assist: bool,
}

impl StateMessage {
    /// `tick` is the per-connection frame index, which keeps growing across resets.
    pub fn from_frame(f: &Frame, tick: u64) -> Self {
        Self {
            tick,
            t: f.t,
            x: f.x,
            y: f.y,
            vx: f.vx,
            vy: f.vy,
            u_user: f.u_user,
            u_applied: f.u_applied,
            intervention: f.intervention,
            mode: f.mode.as_str().to_string(),
            goal_index: f.goal_index,
            goals_done: f.goals_done,
            collisions: f.collisions,
            solve_ms: f.solve_ms,
            assist: f.assist,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Layout {
        session: SessionDescriptor,
        environment: Environment,
        control_hz: f64,
        frame_hz: f64,
    },
    State(StateMessage),
    End {
        metrics: SessionMetrics,
        /// Recorded input file for this run, when recording is on.
        replay: Option<String>,
    },
}

impl ServerMessage {
    pub fn layout(session: SessionDescriptor, environment: Environment) -> Self {
        ServerMessage::Layout {
            session,
            environment,
            control_hz: (CLOCK_HZ / CONTROL_PERIOD) as f64,
            frame_hz: (CLOCK_HZ / FRAME_PERIOD) as f64,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialise")
    }
}

/// Close reason sent when a client breaks the protocol.
pub const PROTOCOL_ERROR: &str = "protocol-error";
/// Application close code paired with [`PROTOCOL_ERROR`].
pub const PROTOCOL_ERROR_CODE: u16 = 4000;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_client_messages() {
        assert_eq!(
            ClientMessage::parse(r#"{"type":"input","ax":0.5,"ay":-1,"assist":true,"seq":3}"#).unwrap(),
            ClientMessage::Input { ax: 0.5, ay: -1.0, assist: true, seq: 3 }
        );
        assert_eq!(
            ClientMessage::parse(r#"{"type":"control","cmd":"toggle_assist"}"#).unwrap(),
            ClientMessage::Control { cmd: ControlCmd::ToggleAssist }
        );
        assert!(ClientMessage::parse(r#"{"type":"input","ax":0.5}"#).is_err());
        assert!(ClientMessage::parse(r#"{"type":"warp"}"#).is_err());
        assert!(ClientMessage::parse("[1,2]").is_err());
    }

    #[test]
    fn state_message_field_names() {
        let env = misc_core::world::default_environment();
        let sim = misc_core::world::Simulation::new(env, None, false, Default::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&ServerMessage::State(StateMessage::from_frame(&sim.frame(), 0)).to_json()).unwrap();
        for key in [
            "type", "tick", "t", "x", "y", "vx", "vy", "u_user", "u_applied", "intervention", "mode", "goal_index", "goals_done",
            "collisions", "solve_ms",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["type"], "state");
        assert_eq!(v["mode"], "off");
    }
}
