//! Scripted stand-ins for the human operator.

use std::collections::{BinaryHeap, VecDeque};
use std::cmp::Reverse;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::env::{Environment, Goal, Rect};
use super::AgentState;

/// What a policy sees at a control tick.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub env: &'a Environment,
    pub state: AgentState,
    /// Control-tick index (50 Hz).
    pub tick: u64,
    pub time: f64,
    /// Index of the next goal to capture; equals `env.goals.len()` when done.
    pub goal_index: usize,
}

impl Observation<'_> {
    pub fn goal(&self) -> Option<&Goal> {
        self.env.goals.get(self.goal_index)
    }
}

/// Reference acceleration plus an optional assist request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserInput {
    pub u: [f64; 2],
    pub assist: Option<bool>,
}

impl UserInput {
    pub fn accel(u: [f64; 2]) -> Self {
        Self { u, assist: None }
    }
}

pub trait UserPolicy {
    fn name(&self) -> &str;
    fn input(&mut self, obs: &Observation<'_>) -> UserInput;
    /// True once the policy has nothing more to say (replays).
    fn finished(&self, _tick: u64) -> bool {
        false
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Adversarial,
    RandomWalk,
    GoalSeeker,
    Replay(String),
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    /// `adversarial`, `random_walk`, `goal_seeker` or `replay:<file>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adversarial" => Ok(Self::Adversarial),
            "random_walk" | "random-walk" => Ok(Self::RandomWalk),
            "goal_seeker" | "goal-seeker" => Ok(Self::GoalSeeker),
            _ => match s.strip_prefix("replay:") {
                Some(path) if !path.is_empty() => Ok(Self::Replay(path.to_string())),
                _ => Err(format!("unknown policy {s:?}")),
            },
        }
    }
}

/// Builds a scripted user. Everything is a pure function of `seed` and the
/// observations, except replays, which read their file once.
pub fn scripted_user(kind: &PolicyKind, env: &Environment, seed: u64) -> Result<Box<dyn UserPolicy>, ReplayError> {
    Ok(match kind {
        PolicyKind::Adversarial => Box::new(Adversarial::new(env, seed)),
        PolicyKind::RandomWalk => Box::new(RandomWalk::new(env, seed)),
        PolicyKind::GoalSeeker => Box::new(GoalSeeker::new(env)),
        PolicyKind::Replay(path) => Box::new(Replay::from_file(Path::new(path))?),
    })
}

/// Saturates `d` onto the boundary of the box `|u|∞ <= amax`.
fn saturate(d: [f64; 2], amax: f64) -> [f64; 2] {
    let m = d[0].abs().max(d[1].abs());
    if m < 1e-12 {
        return [amax, 0.0];
    }
    [amax * d[0] / m, amax * d[1] / m]
}

/// Charges at unsafe regions at full acceleration. Most of the time the
/// target is the nearest obstacle or wall; every so often a seeded draw picks
/// another one so the run explores the whole maze.
#[derive(Debug, Clone)]
pub struct Adversarial {
    rng: ChaCha8Rng,
    amax: f64,
    targets: Vec<Rect>,
    focus: Option<usize>,
    hold: u32,
}

impl Adversarial {
    pub fn new(env: &Environment, seed: u64) -> Self {
        let w = env.workspace;
        let big = 1e3;
        let mut targets = env.obstacles.clone();
        // Outside of each wall.
        targets.push(Rect::new(w.min[0] - big, w.min[0], w.min[1] - big, w.max[1] + big));
        targets.push(Rect::new(w.max[0], w.max[0] + big, w.min[1] - big, w.max[1] + big));
        targets.push(Rect::new(w.min[0] - big, w.max[0] + big, w.min[1] - big, w.min[1]));
        targets.push(Rect::new(w.min[0] - big, w.max[0] + big, w.max[1], w.max[1] + big));
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            amax: env.limits.amax,
            targets,
            focus: None,
            hold: 0,
        }
    }
}

impl UserPolicy for Adversarial {
    fn name(&self) -> &str {
        "adversarial"
    }

    fn input(&mut self, obs: &Observation<'_>) -> UserInput {
        let p = obs.state.position();
        if self.hold == 0 {
            self.focus = if self.rng.random_bool(0.5) {
                None
            } else {
                Some(self.rng.random_range(0..self.targets.len()))
            };
            self.hold = self.rng.random_range(25..250);
        }
        self.hold -= 1;
        let target = self.focus.unwrap_or_else(|| {
            (0..self.targets.len())
                .min_by(|&a, &b| self.targets[a].distance(p).total_cmp(&self.targets[b].distance(p)))
                .expect("at least the four walls")
        });
        let q = self.targets[target].closest_point(p);
        let mut d = [q[0] - p[0], q[1] - p[1]];
        if d[0].hypot(d[1]) < 1e-9 {
            // Touching: keep pushing into the box's centre.
            let r = &self.targets[target];
            d = [(r.min[0] + r.max[0]) / 2.0 - p[0], (r.min[1] + r.max[1]) / 2.0 - p[1]];
        }
        UserInput::accel(saturate(d, self.amax))
    }
}

/// Mean-reverting random acceleration with seeded increments.
#[derive(Debug, Clone)]
pub struct RandomWalk {
    rng: ChaCha8Rng,
    amax: f64,
    u: [f64; 2],
}

impl RandomWalk {
    pub fn new(env: &Environment, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            amax: env.limits.amax,
            u: [0.0; 2],
        }
    }
}

impl UserPolicy for RandomWalk {
    fn name(&self) -> &str {
        "random_walk"
    }

    fn input(&mut self, _obs: &Observation<'_>) -> UserInput {
        for k in 0..2 {
            let step = self.rng.random_range(-1.0..1.0) * 0.15 * self.amax;
            self.u[k] = (0.97 * self.u[k] + step).clamp(-self.amax, self.amax);
        }
        UserInput::accel(self.u)
    }
}

/// Follows a grid distance field towards the current goal and settles on
/// it with a critically damped PD law.
#[derive(Debug, Clone)]
pub struct GoalSeeker {
    grid: Grid,
    field: Option<(usize, Vec<f64>)>,
    amax: f64,
}

const CELL: f64 = 0.5;
const PLAN_CLEARANCE: f64 = 0.6;
const CRUISE: f64 = 8.0;
const BRAKE: f64 = 6.0;
const LOOKAHEAD: usize = 10;

#[derive(Debug, Clone)]
struct Grid {
    origin: [f64; 2],
    nx: usize,
    ny: usize,
    free: Vec<bool>,
    walls: Rect,
    obstacles: Vec<Rect>,
}

impl Grid {
    fn new(env: &Environment) -> Self {
        let w = env.inner_workspace();
        let nx = ((w.max[0] - w.min[0]) / CELL).floor() as usize + 1;
        let ny = ((w.max[1] - w.min[1]) / CELL).floor() as usize + 1;
        let obstacles = env.inflated_obstacles();
        let mut free = vec![false; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let p = [w.min[0] + i as f64 * CELL, w.min[1] + j as f64 * CELL];
                let wall = (p[0] - w.min[0]).min(w.max[0] - p[0]).min(p[1] - w.min[1]).min(w.max[1] - p[1]);
                let clear = obstacles.iter().map(|o| o.distance(p)).fold(wall, f64::min);
                free[j * nx + i] = clear >= PLAN_CLEARANCE;
            }
        }
        Self {
            origin: w.min,
            nx,
            ny,
            free,
            walls: w,
            obstacles,
        }
    }

    fn clearance(&self, p: [f64; 2]) -> f64 {
        let w = &self.walls;
        let wall = (p[0] - w.min[0]).min(w.max[0] - p[0]).min(p[1] - w.min[1]).min(w.max[1] - p[1]);
        self.obstacles.iter().map(|o| o.distance(p)).fold(wall, f64::min)
    }

    /// The straight segment keeps at least `margin` from everything.
    fn visible(&self, a: [f64; 2], b: [f64; 2], margin: f64) -> bool {
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        let steps = (len / (CELL / 2.0)).ceil().max(1.0) as usize;
        (1..=steps).all(|k| {
            let s = k as f64 / steps as f64;
            self.clearance([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]) >= margin
        })
    }

    fn point(&self, c: usize) -> [f64; 2] {
        [self.origin[0] + (c % self.nx) as f64 * CELL, self.origin[1] + (c / self.nx) as f64 * CELL]
    }

    fn cell(&self, p: [f64; 2]) -> usize {
        let i = ((p[0] - self.origin[0]) / CELL).round().clamp(0.0, (self.nx - 1) as f64) as usize;
        let j = ((p[1] - self.origin[1]) / CELL).round().clamp(0.0, (self.ny - 1) as f64) as usize;
        j * self.nx + i
    }

    /// Nearest free cell by breadth-first search.
    fn nearest_free(&self, c: usize) -> Option<usize> {
        let mut seen = vec![false; self.free.len()];
        let mut queue = VecDeque::from([c]);
        seen[c] = true;
        while let Some(k) = queue.pop_front() {
            if self.free[k] {
                return Some(k);
            }
            for (nb, _) in self.neighbours(k, false) {
                if !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        None
    }

    fn neighbours(&self, c: usize, only_free: bool) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (i, j) = ((c % self.nx) as i64, (c / self.nx) as i64);
        const STEPS: [(i64, i64); 8] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)];
        STEPS.iter().filter_map(move |&(di, dj)| {
            let (a, b) = (i + di, j + dj);
            if a < 0 || b < 0 || a >= self.nx as i64 || b >= self.ny as i64 {
                return None;
            }
            let k = b as usize * self.nx + a as usize;
            if only_free && !self.free[k] {
                return None;
            }
            // No corner cutting.
            if only_free && di != 0 && dj != 0 {
                let s1 = j as usize * self.nx + a as usize;
                let s2 = b as usize * self.nx + i as usize;
                if !self.free[s1] || !self.free[s2] {
                    return None;
                }
            }
            let len = if di != 0 && dj != 0 { std::f64::consts::SQRT_2 } else { 1.0 };
            Some((k, len * CELL))
        })
    }

    /// Path length to `goal` from every cell (infinite where unreachable).
    fn distance_field(&self, goal: [f64; 2]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.free.len()];
        let Some(g) = self.nearest_free(self.cell(goal)) else {
            return dist;
        };
        dist[g] = 0.0;
        let mut heap = BinaryHeap::from([Reverse((OrdF64(0.0), g))]);
        while let Some(Reverse((OrdF64(d), c))) = heap.pop() {
            if d > dist[c] {
                continue;
            }
            for (nb, w) in self.neighbours(c, true) {
                let nd = d + w;
                if nd < dist[nb] {
                    dist[nb] = nd;
                    heap.push(Reverse((OrdF64(nd), nb)));
                }
            }
        }
        dist
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrdF64(f64);

impl Eq for OrdF64 {}

impl PartialOrd for OrdF64 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrdF64 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl GoalSeeker {
    pub fn new(env: &Environment) -> Self {
        Self {
            grid: Grid::new(env),
            field: None,
            amax: env.limits.amax,
        }
    }
}

impl UserPolicy for GoalSeeker {
    fn name(&self) -> &str {
        "goal_seeker"
    }

    fn input(&mut self, obs: &Observation<'_>) -> UserInput {
        let Some(goal) = obs.goal().copied() else {
            return UserInput::accel([0.0; 2]);
        };
        if self.field.as_ref().is_none_or(|(k, _)| *k != obs.goal_index) {
            self.field = Some((obs.goal_index, self.grid.distance_field(goal.center)));
        }
        let (_, field) = self.field.as_ref().expect("field just built");
        let s = obs.state;
        let p = s.position();
        let to_goal = [goal.center[0] - p[0], goal.center[1] - p[1]];
        let u = if to_goal[0].hypot(to_goal[1]) < 2.0 {
            let (kp, kd) = (8.0, 2.0 * 8f64.sqrt());
            [kp * to_goal[0] - kd * s.vx, kp * to_goal[1] - kd * s.vy]
        } else {
            let start = self.grid.cell(p);
            let start = if self.grid.free[start] { Some(start) } else { self.grid.nearest_free(start) };
            let mut target = goal.center;
            let mut remaining = to_goal[0].hypot(to_goal[1]);
            if let Some(mut c) = start {
                remaining = field[c];
                target = self.grid.point(c);
                for _ in 0..LOOKAHEAD {
                    let next = self.grid.neighbours(c, true).min_by(|a, b| field[a.0].total_cmp(&field[b.0]));
                    match next {
                        Some((nb, _)) if field[nb] < field[c] => c = nb,
                        _ => break,
                    }
                    let q = self.grid.point(c);
                    if !self.grid.visible(p, q, PLAN_CLEARANCE / 2.0) {
                        break;
                    }
                    target = q;
                }
            }
            let d = [target[0] - p[0], target[1] - p[1]];
            let norm = d[0].hypot(d[1]).max(1e-9);
            let speed = CRUISE.min((2.0 * BRAKE * remaining.max(0.0)).sqrt());
            let k = 6.0;
            [k * (speed * d[0] / norm - s.vx), k * (speed * d[1] / norm - s.vy)]
        };
        UserInput::accel([u[0].clamp(-self.amax, self.amax), u[1].clamp(-self.amax, self.amax)])
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("replay io: {0}")]
    Io(#[from] std::io::Error),
    #[error("replay line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// One recorded control tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplayRecord {
    pub tick: u64,
    pub ax: f64,
    pub ay: f64,
    pub assist: bool,
}

/// Writes `tick,ax,ay,assist` rows. Floats use the shortest representation
/// that parses back to the same bits.
pub fn write_replay<W: std::io::Write>(records: &[ReplayRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_replay(text: &str) -> Result<Vec<ReplayRecord>, ReplayError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| ReplayError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers != vec!["tick", "ax", "ay", "assist"] {
        return Err(ReplayError::Parse {
            line: 1,
            message: format!("expected header tick,ax,ay,assist, got {}", headers.iter().collect::<Vec<_>>().join(",")),
        });
    }
    let mut out: Vec<ReplayRecord> = Vec::new();
    for rec in rdr.deserialize::<ReplayRecord>() {
        let rec = rec.map_err(|e| ReplayError::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = out.len() + 2;
        if !rec.ax.is_finite() || !rec.ay.is_finite() {
            return Err(ReplayError::Parse {
                line,
                message: "non-finite input".into(),
            });
        }
        if rec.tick != out.len() as u64 {
            return Err(ReplayError::Parse {
                line,
                message: format!("expected tick {}, found {}", out.len(), rec.tick),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Plays back a recording tick by tick.
#[derive(Debug, Clone)]
pub struct Replay {
    records: Vec<ReplayRecord>,
}

impl Replay {
    pub fn new(records: Vec<ReplayRecord>) -> Self {
        Self { records }
    }

    pub fn from_file(path: &Path) -> Result<Self, ReplayError> {
        Ok(Self::new(parse_replay(&std::fs::read_to_string(path)?)?))
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

impl UserPolicy for Replay {
    fn name(&self) -> &str {
        "replay"
    }

    fn input(&mut self, obs: &Observation<'_>) -> UserInput {
        match self.records.get(obs.tick as usize) {
            Some(r) => UserInput {
                u: [r.ax, r.ay],
                assist: Some(r.assist),
            },
            None => UserInput::accel([0.0; 2]),
        }
    }

    fn finished(&self, tick: u64) -> bool {
        tick as usize >= self.records.len()
    }
}
