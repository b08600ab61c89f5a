use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Polytope;
use crate::invariance::LinearSystem;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnvError {
    #[error("invalid environment: {0}")]
    Invalid(String),
    #[error("environment json: {0}")]
    Parse(String),
}

/// Axis-aligned rectangle `[min.x, max.x] × [min.y, max.y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Rect {
    pub const fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        Self {
            min: [x0, y0],
            max: [x1, y1],
        }
    }

    pub fn inflate(&self, r: f64) -> Rect {
        Rect {
            min: [self.min[0] - r, self.min[1] - r],
            max: [self.max[0] + r, self.max[1] + r],
        }
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.min[0] < other.max[0] && other.min[0] < self.max[0] && self.min[1] < other.max[1] && other.min[1] < self.max[1]
    }

    /// Euclidean distance from `p` to the rectangle (0 inside).
    pub fn distance(&self, p: [f64; 2]) -> f64 {
        let dx = (self.min[0] - p[0]).max(0.0).max(p[0] - self.max[0]);
        let dy = (self.min[1] - p[1]).max(0.0).max(p[1] - self.max[1]);
        dx.hypot(dy)
    }

    /// Closest point of the rectangle to `p`.
    pub fn closest_point(&self, p: [f64; 2]) -> [f64; 2] {
        [p[0].clamp(self.min[0], self.max[0]), p[1].clamp(self.min[1], self.max[1])]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Goal {
    pub center: [f64; 2],
    pub radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub vmax: f64,
    pub amax: f64,
}

/// Maze layout plus the physical parameters of the agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub workspace: Rect,
    pub obstacles: Vec<Rect>,
    pub goals: Vec<Goal>,
    pub start: [f64; 2],
    pub agent_radius: f64,
    pub limits: Limits,
    pub goal_speed_max: f64,
    pub dt: f64,
    pub gamma: f64,
}

/// One half-space `normal . x <= offset` of the safe side of an obstacle.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    pub normal: Vec<f64>,
    pub offset: f64,
}

pub const FACE_NAMES: [&str; 4] = ["left", "right", "below", "above"];

/// The five-rectangle maze with goals a → d.
pub fn default_environment() -> Environment {
    Environment {
        workspace: Rect::new(5.0, 79.2, 27.1, 100.7),
        obstacles: vec![
            Rect::new(68.7, 79.7, 27.0, 47.7),
            Rect::new(12.7, 51.9, 33.1, 48.4),
            Rect::new(5.0, 62.5, 42.4, 48.4),
            Rect::new(5.0, 42.9, 76.0, 94.3),
            Rect::new(48.8, 73.6, 54.3, 100.7),
        ],
        goals: [[7.9, 73.5], [75.9, 97.1], [54.8, 39.7], [9.5, 38.9]]
            .into_iter()
            .map(|center| Goal { center, radius: 2.15 })
            .collect(),
        start: [7.1, 98.1],
        agent_radius: 1.2,
        limits: Limits { vmax: 20.0, amax: 40.0 },
        goal_speed_max: 0.9,
        dt: 0.02,
        gamma: 0.1,
    }
}

impl Environment {
    pub fn from_json(text: &str) -> Result<Self, EnvError> {
        let env: Environment = serde_json::from_str(text).map_err(|e| EnvError::Parse(e.to_string()))?;
        env.validate()?;
        Ok(env)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("environment serialises")
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: String| Err(EnvError::Invalid(m));
        let finite = [self.agent_radius, self.limits.vmax, self.limits.amax, self.goal_speed_max, self.dt, self.gamma]
            .iter()
            .chain(self.workspace.min.iter())
            .chain(self.workspace.max.iter())
            .chain(self.start.iter())
            .all(|v| v.is_finite());
        if !finite {
            return bad("non-finite parameter".into());
        }
        if !(self.workspace.min[0] < self.workspace.max[0] && self.workspace.min[1] < self.workspace.max[1]) {
            return bad("workspace must have min < max".into());
        }
        let inner = self.inner_workspace();
        if !(inner.min[0] < inner.max[0] && inner.min[1] < inner.max[1]) {
            return bad("agent does not fit in the workspace".into());
        }
        if self.agent_radius < 0.0 {
            return bad("agent_radius must be non-negative".into());
        }
        if self.limits.vmax <= 0.0 || self.limits.amax <= 0.0 {
            return bad("limits must be positive".into());
        }
        if self.dt <= 0.0 || self.gamma < 0.0 || self.gamma * self.dt >= 1.0 {
            return bad("need dt > 0 and 0 <= gamma*dt < 1".into());
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if !(o.min[0] < o.max[0] && o.min[1] < o.max[1]) || o.min.iter().chain(&o.max).any(|v| !v.is_finite()) {
                return bad(format!("obstacle {i} is degenerate"));
            }
            if !o.intersects(&self.workspace) {
                return bad(format!("obstacle {i} does not intersect the workspace"));
            }
        }
        for (k, g) in self.goals.iter().enumerate() {
            if !(g.radius > 0.0) || !self.workspace.contains(g.center) {
                return bad(format!("goal {k} is invalid"));
            }
        }
        if !self.position_is_safe(self.start, 0.0) {
            return bad("start position is not in the safe set".into());
        }
        Ok(())
    }

    pub fn system(&self) -> LinearSystem {
        LinearSystem::damped_double_integrator(self.dt, self.gamma)
    }

    /// Region available to the agent centre.
    pub fn inner_workspace(&self) -> Rect {
        self.workspace.inflate(-self.agent_radius)
    }

    pub fn inflated_obstacles(&self) -> Vec<Rect> {
        self.obstacles.iter().map(|o| o.inflate(self.agent_radius)).collect()
    }

    /// State polytope `F x <= f`: centre inside the shrunk workspace, `|v| <= vmax`.
    pub fn state_polytope(&self) -> Polytope {
        let w = self.inner_workspace();
        let v = self.limits.vmax;
        Polytope::from_box(&[w.min[0], w.min[1], -v, -v], &[w.max[0], w.max[1], v, v]).expect("finite box")
    }

    /// Control polytope `G u <= g`: `|a| <= amax` per axis.
    pub fn control_polytope(&self) -> Polytope {
        let a = self.limits.amax;
        Polytope::from_box(&[-a, -a], &[a, a]).expect("finite box")
    }

    /// Outward faces of each inflated obstacle, ordered left, right, below, above.
    pub fn obstacle_faces(&self) -> Vec<Vec<Face>> {
        self.inflated_obstacles()
            .iter()
            .map(|o| {
                let f = |normal: [f64; 4], offset: f64| Face {
                    normal: normal.to_vec(),
                    offset,
                };
                vec![
                    f([1.0, 0.0, 0.0, 0.0], o.min[0]),
                    f([-1.0, 0.0, 0.0, 0.0], -o.max[0]),
                    f([0.0, 1.0, 0.0, 0.0], o.min[1]),
                    f([0.0, -1.0, 0.0, 0.0], -o.max[1]),
                ]
            })
            .collect()
    }

    /// Centre position inside the shrunk workspace and outside every inflated obstacle.
    pub fn position_is_safe(&self, p: [f64; 2], tol: f64) -> bool {
        let w = self.inner_workspace();
        if p[0] < w.min[0] - tol || p[0] > w.max[0] + tol || p[1] < w.min[1] - tol || p[1] > w.max[1] + tol {
            return false;
        }
        self.inflated_obstacles().iter().all(|o| {
            p[0] <= o.min[0] + tol || p[0] >= o.max[0] - tol || p[1] <= o.min[1] + tol || p[1] >= o.max[1] - tol
        })
    }

    /// Full state admissibility: `x ∈ P ∩ D`.
    pub fn state_is_admissible(&self, x: &[f64], tol: f64) -> bool {
        self.position_is_safe([x[0], x[1]], tol) && x[2].abs() <= self.limits.vmax + tol && x[3].abs() <= self.limits.vmax + tol
    }

    /// Signed clearance between the agent disk and the physical geometry
    /// (negative when the disk overlaps an obstacle or leaves the workspace).
    pub fn clearance(&self, p: [f64; 2]) -> f64 {
        let w = &self.workspace;
        let wall = (p[0] - w.min[0]).min(w.max[0] - p[0]).min(p[1] - w.min[1]).min(w.max[1] - p[1]);
        let mut best = wall - self.agent_radius;
        for o in &self.obstacles {
            let d = if o.contains(p) {
                -(p[0] - o.min[0]).min(o.max[0] - p[0]).min(p[1] - o.min[1]).min(o.max[1] - p[1])
            } else {
                o.distance(p)
            };
            best = best.min(d - self.agent_radius);
        }
        best
    }

    /// Number of half-spaces per obstacle (`n_{c_i}`).
    pub fn faces_per_obstacle(&self) -> Vec<usize> {
        vec![4; self.obstacles.len()]
    }
}
