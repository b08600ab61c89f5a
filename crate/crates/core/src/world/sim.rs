//! Deterministic two-rate session loop.
//!
//! Time advances on a 150 Hz clock. Control ticks fall on every third unit
//! (50 Hz) and frames on every fifth (30 Hz). When both coincide the frame is
//! published first, so a frame always shows the state at its own instant.
//! Between control ticks the last applied input is held.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::env::Environment;
use super::policy::{Observation, ReplayRecord, UserPolicy};
use super::{step_dynamics, AgentState};
use crate::filter::{Controller, FilterError, FilterSettings, Mode, MEMBERSHIP_TOL};
use crate::invariance::CisAtlas;
use crate::solve::MiqpStatus;

pub const CLOCK_HZ: u64 = 150;
pub const CONTROL_PERIOD: u64 = 3;
pub const FRAME_PERIOD: u64 = 5;
/// Slack on the geometric collision test, far below anything visible.
pub const COLLISION_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("assist requested but no atlas was loaded")]
    NoController,
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Filter outcome of one control tick, or `Off` when unassisted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TickMode {
    PassThrough,
    Corrected,
    Fallback,
    Off,
}

impl From<Mode> for TickMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::PassThrough => TickMode::PassThrough,
            Mode::Corrected => TickMode::Corrected,
            Mode::Fallback => TickMode::Fallback,
        }
    }
}

impl TickMode {
    pub fn as_str(self) -> &'static str {
        match self {
            TickMode::PassThrough => "pass_through",
            TickMode::Corrected => "corrected",
            TickMode::Fallback => "fallback",
            TickMode::Off => "off",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Control ticks before the session is cut off (10 simulated minutes).
    pub max_ticks: u64,
    pub stop_on_completion: bool,
    /// Keep a [`TickRecord`] per control tick.
    pub log_ticks: bool,
    /// Keep a [`ReplayRecord`] per control tick.
    pub record_inputs: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            max_ticks: 30_000,
            stop_on_completion: true,
            log_ticks: false,
            record_inputs: false,
        }
    }
}

/// Snapshot published at 30 Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    /// Frame index, strictly increasing.
    pub tick: u64,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub u_user: [f64; 2],
    pub u_applied: [f64; 2],
    pub intervention: f64,
    pub mode: TickMode,
    pub goal_index: usize,
    pub goals_done: usize,
    pub collisions: u64,
    /// Wall time of the latest control tick; the only non-reproducible field.
    pub solve_ms: f64,
    pub assist: bool,
}

/// Audit record of one control tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub tick: u64,
    pub state: [f64; 4],
    pub u_user: [f64; 2],
    pub u_applied: [f64; 2],
    pub mode: TickMode,
    pub miqp_status: Option<MiqpStatus>,
    pub nodes: usize,
    pub wall_time_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionMetrics {
    /// Time of the last goal capture, when all goals were reached.
    pub completion_duration: Option<f64>,
    pub complete: bool,
    /// Cut off by the tick cap before completion.
    pub incomplete: bool,
    pub duration: f64,
    pub control_ticks: u64,
    pub frames: u64,
    pub collisions: u64,
    pub goals_reached: usize,
    pub split_times: Vec<f64>,
    pub mean_intervention: f64,
    pub max_intervention: f64,
    pub assisted_ticks: u64,
    pub pass_through_ticks: u64,
    pub corrected_ticks: u64,
    pub fallback_ticks: u64,
    /// Assisted ticks whose successor left `P ∩ D`.
    pub violations: u64,
    /// Solver calls that came back infeasible.
    pub infeasible: u64,
    /// Assist was requested while the state was outside the invariant region.
    pub unarmed_ticks: u64,
}

pub struct Simulation {
    env: Environment,
    controller: Option<Controller>,
    config: SimConfig,
    assist: bool,
    armed: bool,
    state: AgentState,
    clock: u64,
    ticks: u64,
    frames: u64,
    u_user: [f64; 2],
    u_applied: [f64; 2],
    intervention: f64,
    mode: TickMode,
    solve_ms: f64,
    goal_index: usize,
    checkpoint: [f64; 2],
    split_times: Vec<f64>,
    collisions: u64,
    violations: u64,
    infeasible: u64,
    unarmed: u64,
    counts: [u64; 3],
    assisted: u64,
    intervention_sum: f64,
    intervention_max: f64,
    tick_log: Vec<TickRecord>,
    inputs: Vec<ReplayRecord>,
}

impl Simulation {
    /// `controller` may be omitted only for unassisted sessions.
    pub fn new(env: Environment, controller: Option<Controller>, assist: bool, config: SimConfig) -> Result<Self, SimError> {
        env.validate().map_err(|e| SimError::InvalidInput(e.to_string()))?;
        if assist && controller.is_none() {
            return Err(SimError::NoController);
        }
        let state = AgentState::at_rest(env.start);
        if let (true, Some(c)) = (assist, &controller) {
            c.check_start(&state.to_vec())?;
        }
        Ok(Self {
            checkpoint: env.start,
            env,
            controller,
            config,
            assist,
            armed: assist,
            state,
            clock: 0,
            ticks: 0,
            frames: 0,
            u_user: [0.0; 2],
            u_applied: [0.0; 2],
            intervention: 0.0,
            mode: TickMode::Off,
            solve_ms: 0.0,
            goal_index: 0,
            split_times: Vec::new(),
            collisions: 0,
            violations: 0,
            infeasible: 0,
            unarmed: 0,
            counts: [0; 3],
            assisted: 0,
            intervention_sum: 0.0,
            intervention_max: 0.0,
            tick_log: Vec::new(),
            inputs: Vec::new(),
        })
    }

    pub fn env(&self) -> &Environment {
        &self.env
    }

    pub fn state(&self) -> AgentState {
        self.state
    }

    pub fn assist(&self) -> bool {
        self.assist
    }

    pub fn control_ticks(&self) -> u64 {
        self.ticks
    }

    pub fn time(&self) -> f64 {
        self.clock as f64 / CLOCK_HZ as f64
    }

    pub fn set_assist(&mut self, on: bool) -> Result<(), SimError> {
        if on && self.controller.is_none() {
            return Err(SimError::NoController);
        }
        if on != self.assist {
            self.assist = on;
            self.armed = false;
        }
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.goal_index >= self.env.goals.len()
    }

    pub fn is_finished(&self) -> bool {
        (self.config.stop_on_completion && self.is_complete()) || self.ticks >= self.config.max_ticks
    }

    pub fn tick_log(&self) -> &[TickRecord] {
        &self.tick_log
    }

    pub fn recorded_inputs(&self) -> &[ReplayRecord] {
        &self.inputs
    }

    pub fn take_recorded_inputs(&mut self) -> Vec<ReplayRecord> {
        std::mem::take(&mut self.inputs)
    }

    /// Current snapshot (does not advance time).
    pub fn frame(&self) -> Frame {
        Frame {
            tick: self.frames,
            t: self.time(),
            x: self.state.x,
            y: self.state.y,
            vx: self.state.vx,
            vy: self.state.vy,
            u_user: self.u_user,
            u_applied: self.u_applied,
            intervention: self.intervention,
            mode: self.mode,
            goal_index: self.goal_index,
            goals_done: self.split_times.len(),
            collisions: self.collisions,
            solve_ms: self.solve_ms,
            assist: self.assist,
        }
    }

    /// Publishes the frame at the current instant, then runs every control
    /// tick up to (not including) the next frame instant.
    pub fn advance_frame(&mut self, policy: &mut dyn UserPolicy) -> Result<Frame, SimError> {
        let frame = self.frame();
        self.frames += 1;
        for c in self.clock..self.clock + FRAME_PERIOD {
            if c % CONTROL_PERIOD == 0 && !self.is_finished() && !policy.finished(self.ticks) {
                self.control_tick(policy)?;
            }
        }
        self.clock += FRAME_PERIOD;
        Ok(frame)
    }

    fn control_tick(&mut self, policy: &mut dyn UserPolicy) -> Result<(), SimError> {
        let obs = Observation {
            env: &self.env,
            state: self.state,
            tick: self.ticks,
            time: self.ticks as f64 * self.env.dt,
            goal_index: self.goal_index,
        };
        let input = policy.input(&obs);
        if let Some(on) = input.assist {
            self.set_assist(on)?;
        }
        if input.u.iter().any(|v| !v.is_finite()) {
            return Err(SimError::InvalidInput(format!("non-finite input {:?}", input.u)));
        }
        if self.config.record_inputs {
            self.inputs.push(ReplayRecord {
                tick: self.ticks,
                ax: input.u[0],
                ay: input.u[1],
                assist: self.assist,
            });
        }
        let x = self.state.to_vec();
        let amax = self.env.limits.amax;
        let clipped = [input.u[0].clamp(-amax, amax), input.u[1].clamp(-amax, amax)];

        let mut status = None;
        let mut nodes = 0;
        let mut wall_us = 0;
        let (u, mode) = match (self.assist, self.controller.as_mut()) {
            (true, Some(ctrl)) => {
                if !self.armed && ctrl.in_invariant_region(&x, MEMBERSHIP_TOL) && self.env.state_is_admissible(&x, 1e-9) {
                    self.armed = true;
                }
                if self.armed {
                    let r = ctrl.control_tick(&x, &input.u)?;
                    status = r.miqp_status;
                    nodes = r.solve_stats.nodes;
                    wall_us = r.wall_time_us;
                    self.assisted += 1;
                    self.counts[match r.mode {
                        Mode::PassThrough => 0,
                        Mode::Corrected => 1,
                        Mode::Fallback => 2,
                    }] += 1;
                    if status == Some(MiqpStatus::Infeasible) {
                        self.infeasible += 1;
                    }
                    self.intervention_sum += r.intervention;
                    self.intervention_max = self.intervention_max.max(r.intervention);
                    ([r.u_applied[0], r.u_applied[1]], TickMode::from(r.mode))
                } else {
                    self.unarmed += 1;
                    (clipped, TickMode::Off)
                }
            }
            _ => (clipped, TickMode::Off),
        };
        self.u_user = input.u;
        self.u_applied = u;
        self.intervention = (u[0] - input.u[0]).hypot(u[1] - input.u[1]);
        self.mode = mode;
        self.solve_ms = wall_us as f64 / 1e3;
        if self.config.log_ticks {
            self.tick_log.push(TickRecord {
                tick: self.ticks,
                state: [x[0], x[1], x[2], x[3]],
                u_user: input.u,
                u_applied: u,
                mode,
                miqp_status: status,
                nodes,
                wall_time_us: wall_us,
            });
        }

        self.state = step_dynamics(self.state, u, self.env.dt, self.env.gamma);
        self.ticks += 1;
        let t = self.ticks as f64 * self.env.dt;

        if mode != TickMode::Off && !self.env.state_is_admissible(&self.state.to_vec(), COLLISION_TOL) {
            self.violations += 1;
        }
        if self.env.clearance(self.state.position()) < -COLLISION_TOL {
            self.collisions += 1;
            self.state = AgentState::at_rest(self.checkpoint);
            self.armed = false;
            return Ok(());
        }
        if let Some(g) = self.env.goals.get(self.goal_index) {
            let p = self.state.position();
            let d = (p[0] - g.center[0]).hypot(p[1] - g.center[1]);
            if d + self.env.agent_radius <= g.radius && self.state.speed() < self.env.goal_speed_max {
                self.split_times.push(t);
                self.checkpoint = g.center;
                self.goal_index += 1;
            }
        }
        Ok(())
    }

    pub fn metrics(&self) -> SessionMetrics {
        let complete = self.is_complete();
        SessionMetrics {
            completion_duration: if complete { self.split_times.last().copied() } else { None },
            complete,
            incomplete: !complete && self.ticks >= self.config.max_ticks,
            duration: self.ticks as f64 * self.env.dt,
            control_ticks: self.ticks,
            frames: self.frames,
            collisions: self.collisions,
            goals_reached: self.split_times.len(),
            split_times: self.split_times.clone(),
            mean_intervention: if self.assisted > 0 { self.intervention_sum / self.assisted as f64 } else { 0.0 },
            max_intervention: self.intervention_max,
            assisted_ticks: self.assisted,
            pass_through_ticks: self.counts[0],
            corrected_ticks: self.counts[1],
            fallback_ticks: self.counts[2],
            violations: self.violations,
            infeasible: self.infeasible,
            unarmed_ticks: self.unarmed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionResult {
    pub metrics: SessionMetrics,
    pub frames: Vec<Frame>,
    pub ticks: Vec<TickRecord>,
    pub inputs: Vec<ReplayRecord>,
}

/// Runs a headless session until completion, the tick cap, or the end of a replay.
pub fn run_session(
    env: &Environment,
    atlas: Option<&CisAtlas>,
    policy: &mut dyn UserPolicy,
    assist: bool,
    config: SimConfig,
    filter: FilterSettings,
) -> Result<SessionResult, SimError> {
    let controller = match atlas {
        Some(a) => Some(Controller::new(env, a, filter)?),
        None => None,
    };
    let mut sim = Simulation::new(env.clone(), controller, assist, config)?;
    let mut frames = Vec::new();
    while !sim.is_finished() && !policy.finished(sim.control_ticks()) {
        frames.push(sim.advance_frame(policy)?);
    }
    frames.push(sim.frame());
    Ok(SessionResult {
        metrics: sim.metrics(),
        frames,
        ticks: std::mem::take(&mut sim.tick_log),
        inputs: sim.take_recorded_inputs(),
    })
}

/// One row per frame. Solve timings are left out so the file is reproducible.
pub fn write_trajectory_csv<W: Write>(frames: &[Frame], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "frame", "t", "x", "y", "vx", "vy", "ux_user", "uy_user", "ux_applied", "uy_applied", "intervention", "mode", "assist",
        "goal_index", "goals_done", "collisions",
    ])?;
    for f in frames {
        w.write_record([
            f.tick.to_string(),
            f.t.to_string(),
            f.x.to_string(),
            f.y.to_string(),
            f.vx.to_string(),
            f.vy.to_string(),
            f.u_user[0].to_string(),
            f.u_user[1].to_string(),
            f.u_applied[0].to_string(),
            f.u_applied[1].to_string(),
            f.intervention.to_string(),
            f.mode.as_str().to_string(),
            f.assist.to_string(),
            f.goal_index.to_string(),
            f.goals_done.to_string(),
            f.collisions.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
