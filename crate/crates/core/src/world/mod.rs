//! Maze game: environment geometry, agent dynamics, scripted users and the
//! two-rate session loop.

mod env;
mod policy;
mod sim;

pub use env::{default_environment, EnvError, Environment, Face, Goal, Limits, Rect, FACE_NAMES};
pub use policy::{
    parse_replay, scripted_user, write_replay, Adversarial, GoalSeeker, Observation, PolicyKind, RandomWalk, Replay,
    ReplayError, ReplayRecord, UserInput, UserPolicy,
};
pub use sim::{
    run_session, write_trajectory_csv, Frame, SessionMetrics, SessionResult, SimConfig, SimError, Simulation, TickMode,
    TickRecord, CLOCK_HZ, COLLISION_TOL, CONTROL_PERIOD, FRAME_PERIOD,
};

use serde::{Deserialize, Serialize};

/// Agent state `[X, Y, vx, vy]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

impl AgentState {
    pub fn at_rest(p: [f64; 2]) -> Self {
        Self { x: p[0], y: p[1], vx: 0.0, vy: 0.0 }
    }

    pub fn to_vec(self) -> Vec<f64> {
        vec![self.x, self.y, self.vx, self.vy]
    }

    pub fn from_slice(s: &[f64]) -> Self {
        Self { x: s[0], y: s[1], vx: s[2], vy: s[3] }
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.vx.is_finite() && self.vy.is_finite()
    }
}

/// One step of the damped double integrator.
pub fn step_dynamics(s: AgentState, u: [f64; 2], dt: f64, gamma: f64) -> AgentState {
    let damp = 1.0 - gamma * dt;
    let h = 0.5 * dt * dt;
    AgentState {
        x: s.x + dt * s.vx + h * u[0],
        y: s.y + dt * s.vy + h * u[1],
        vx: damp * s.vx + dt * u[0],
        vy: damp * s.vy + dt * u[1],
    }
}
