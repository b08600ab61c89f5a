//! Online minimal-intervention filter.
//!
//! Each control tick maps `(x, u_ref)` to the input closest to `u_ref` whose
//! successor lies in at least one certified set per obstacle. Inputs whose
//! raw successor is already safe skip the solver entirely.

use std::io::Write;
use std::sync::mpsc::Sender;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::{fix_step_k_binaries, BigMPolicy, EncodeError, ProblemTemplate};
use crate::geometry::{lp_solve, GeometryError, LpStatus, Polytope, Sense};
use crate::invariance::{CisAtlas, CisError, LinearSystem};
use crate::solve::{BnbSettings, MiqpSolver, MiqpStatus, SolveStats, WarmStart};
use crate::world::Environment;

/// Interventions at or below this norm count as pass-through.
pub const PASS_TOL: f64 = 1e-6;
/// Slack on set membership when deciding which sets a state belongs to.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Largest offset relaxation the recovery LP may use; the certification
/// tolerance on `S ⊆ Pre(S)` is of the same order.
pub const RECOVERY_SLACK: f64 = 1e-7;
/// State polytope slack tolerated once the loop is running.
pub const RUNTIME_STATE_TOL: f64 = 1e-6;
/// Face combinations the recovery LP tries before giving up.
const MAX_RECOVERY_COMBINATIONS: usize = 4096;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Atlas(#[from] CisError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("state outside the invariant region: {0}")]
    OutsideInvariantRegion(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unrecoverable fault: {0}")]
    Fault(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    PassThrough,
    Corrected,
    Fallback,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::PassThrough => "pass_through",
            Mode::Corrected => "corrected",
            Mode::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlTickResult {
    pub u_applied: Vec<f64>,
    pub u_user: Vec<f64>,
    /// `‖u_applied - u_user‖₂`.
    pub intervention: f64,
    pub mode: Mode,
    /// `None` when the solver was skipped.
    pub miqp_status: Option<MiqpStatus>,
    pub solve_stats: SolveStats,
    /// Whole tick, including the pass-through test.
    pub wall_time_us: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSettings {
    pub bnb: BnbSettings,
    pub big_m: BigMPolicy,
    /// Wall-clock budget per solve. `None` keeps runs bit-reproducible; the
    /// node cap in `bnb` still bounds the work.
    pub budget_ms: Option<f64>,
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            bnb: BnbSettings::default(),
            big_m: BigMPolicy::default(),
            budget_ms: None,
        }
    }
}

impl FilterSettings {
    /// Settings for a live 50 Hz loop: a 20 ms budget per solve.
    pub fn real_time() -> Self {
        Self {
            budget_ms: Some(20.0),
            ..Self::default()
        }
    }
}

/// One row of the per-tick telemetry stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRecord {
    pub tick: u64,
    pub time: f64,
    pub state: Vec<f64>,
    pub u_user: Vec<f64>,
    pub u_applied: Vec<f64>,
    pub intervention: f64,
    pub mode: Mode,
    pub solve_ms: f64,
    pub nodes: usize,
}

/// Writes telemetry as CSV with a header row.
pub fn write_telemetry_csv<W: Write>(records: &[TelemetryRecord], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "tick", "time", "x", "y", "vx", "vy", "ux_user", "uy_user", "ux_applied", "uy_applied", "intervention", "mode",
        "solve_ms", "nodes",
    ])?;
    for r in records {
        let mut row = vec![r.tick.to_string(), r.time.to_string()];
        row.extend(r.state.iter().map(f64::to_string));
        row.extend(r.u_user.iter().map(f64::to_string));
        row.extend(r.u_applied.iter().map(f64::to_string));
        row.push(r.intervention.to_string());
        row.push(r.mode.as_str().to_string());
        row.push(r.solve_ms.to_string());
        row.push(r.nodes.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Per-environment controller state. Ticks must be issued sequentially.
#[derive(Debug)]
pub struct Controller {
    sys: LinearSystem,
    template: ProblemTemplate,
    solver: MiqpSolver,
    settings: FilterSettings,
    amax: f64,
    controls: Polytope,
    states: Polytope,
    /// Non-empty certified sets per obstacle, tagged with their face index.
    /// Without obstacles, a single group holding the invariant subset of P.
    sets: Vec<Vec<(usize, Polytope)>>,
    warm: Option<WarmStart>,
    tick: u64,
    dt: f64,
    telemetry: Option<Sender<TelemetryRecord>>,
}

impl Controller {
    /// Refuses atlases built for a different environment or system.
    pub fn new(env: &Environment, atlas: &CisAtlas, settings: FilterSettings) -> Result<Self, FilterError> {
        env.validate().map_err(|e| FilterError::InvalidInput(e.to_string()))?;
        atlas.check_matches(env)?;
        let sys = env.system();
        let template = ProblemTemplate::new(&sys, env, atlas, &settings.big_m)?;
        let solver = MiqpSolver::new(template.base(), settings.bnb);
        let faces = env.faces_per_obstacle();
        let mut sets = Vec::with_capacity(faces.len());
        for (i, &count) in faces.iter().enumerate() {
            let mut group = Vec::new();
            for j in 0..count {
                let e = atlas.get(i, j).ok_or(EncodeError::MissingFace(i, j))?;
                if !e.empty {
                    group.push((j, e.set.clone()));
                }
            }
            sets.push(group);
        }
        if let Some(set) = template.convex_set() {
            sets.push(vec![(0, set.clone())]);
        }
        Ok(Self {
            sys,
            template,
            solver,
            settings,
            amax: env.limits.amax,
            controls: env.control_polytope(),
            states: env.state_polytope(),
            sets,
            warm: None,
            tick: 0,
            dt: env.dt,
            telemetry: None,
        })
    }

    /// Sends one [`TelemetryRecord`] per tick; a closed receiver is ignored.
    pub fn with_telemetry(mut self, tx: Sender<TelemetryRecord>) -> Self {
        self.telemetry = Some(tx);
        self
    }

    pub fn settings(&self) -> &FilterSettings {
        &self.settings
    }

    pub fn system(&self) -> &LinearSystem {
        &self.sys
    }

    pub fn ticks(&self) -> u64 {
        self.tick
    }

    /// Faces per obstacle whose certified set contains `x` within `tol`.
    pub fn containing_faces(&self, x: &[f64], tol: f64) -> Vec<Vec<usize>> {
        self.sets
            .iter()
            .map(|g| g.iter().filter(|(_, s)| s.contains_point(x, tol)).map(|(j, _)| *j).collect())
            .collect()
    }

    /// True when `x` lies in at least one certified set per obstacle.
    pub fn in_invariant_region(&self, x: &[f64], tol: f64) -> bool {
        self.sets.iter().all(|g| g.iter().any(|(_, s)| s.contains_point(x, tol)))
    }

    /// Startup check: the induction only holds from inside the invariant region.
    pub fn check_start(&self, x: &[f64]) -> Result<(), FilterError> {
        self.template.check_state(x)?;
        if !self.in_invariant_region(x, MEMBERSHIP_TOL) {
            return Err(FilterError::OutsideInvariantRegion(format!("{x:?}")));
        }
        Ok(())
    }

    /// Euclidean projection onto the control box.
    pub fn project_input(&self, u: &[f64]) -> Vec<f64> {
        u.iter().map(|v| v.clamp(-self.amax, self.amax)).collect()
    }

    pub fn control_tick(&mut self, x: &[f64], u_ref: &[f64]) -> Result<ControlTickResult, FilterError> {
        let start = Instant::now();
        if x.len() != self.sys.n() || x.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::InvalidInput(format!("state {x:?}")));
        }
        if u_ref.len() != self.sys.m() || u_ref.iter().any(|v| !v.is_finite()) {
            return Err(FilterError::InvalidInput(format!("reference input {u_ref:?}")));
        }
        let u_user = u_ref.to_vec();
        let u_proj = self.project_input(u_ref);
        let in_u = u_proj == u_user;

        let raw_next = self.sys.step(x, &u_user);
        let raw_safe = self.states.contains_point(&raw_next, 0.0) && self.in_invariant_region(&raw_next, 0.0);
        let (u_applied, mode, status, stats) = if in_u && raw_safe {
            (u_user.clone(), Mode::PassThrough, None, SolveStats::default())
        } else {
            self.solve(x, &u_proj)?
        };

        let intervention = norm2(&u_applied, &u_user);
        let mode = match mode {
            Mode::Corrected if intervention <= PASS_TOL => Mode::PassThrough,
            m => m,
        };
        let result = ControlTickResult {
            u_applied,
            u_user,
            intervention,
            mode,
            miqp_status: status,
            solve_stats: stats,
            wall_time_us: start.elapsed().as_micros() as u64,
        };
        if let Some(tx) = &self.telemetry {
            let _ = tx.send(TelemetryRecord {
                tick: self.tick,
                time: self.tick as f64 * self.dt,
                state: x.to_vec(),
                u_user: result.u_user.clone(),
                u_applied: result.u_applied.clone(),
                intervention: result.intervention,
                mode: result.mode,
                solve_ms: result.wall_time_us as f64 / 1e3,
                nodes: result.solve_stats.nodes,
            });
        }
        self.tick += 1;
        Ok(result)
    }

    fn solve(&mut self, x: &[f64], u_ref: &[f64]) -> Result<(Vec<f64>, Mode, Option<MiqpStatus>, SolveStats), FilterError> {
        // Fallback inputs may leave the state a rounding error outside P, so the
        // runtime check is looser than the one applied at startup.
        let viol = self.states.max_violation(x);
        if viol > RUNTIME_STATE_TOL {
            return Err(FilterError::Fault(format!("state {x:?} violates the state polytope by {viol:.3e}")));
        }
        let problem = self.template.instantiate_unchecked(x, u_ref);
        let problem = fix_step_k_binaries(&problem, x)?;
        let budget = self.settings.budget_ms.map(|ms| Duration::from_secs_f64(ms.max(0.0) / 1e3));
        let result = self.solver.solve(&problem, budget, self.warm.as_ref());
        self.warm = result.warm_start.clone();
        let stats = result.stats;
        match (result.status, result.u_opt) {
            (MiqpStatus::Optimal, Some(u)) => Ok((self.project_input(&u), Mode::Corrected, Some(MiqpStatus::Optimal), stats)),
            (MiqpStatus::BudgetExceeded, Some(u)) => {
                tracing::warn!(target: "misc::filter", nodes = stats.nodes, "budget exceeded, using incumbent");
                Ok((self.project_input(&u), Mode::Fallback, Some(MiqpStatus::BudgetExceeded), stats))
            }
            (status, _) => {
                tracing::warn!(target: "misc::filter", ?status, "no solver input, using recovery LP");
                let u = self.recovery_input(x)?;
                Ok((u, Mode::Fallback, Some(status), stats))
            }
        }
    }

    /// Smallest-`‖u‖₁` input keeping the successor in the sets `x` currently
    /// occupies. Obstacles with no containing set fall back to all of theirs.
    pub fn recovery_input(&self, x: &[f64]) -> Result<Vec<f64>, FilterError> {
        let containing = self.containing_faces(x, MEMBERSHIP_TOL);
        let choices: Vec<Vec<&Polytope>> = self
            .sets
            .iter()
            .zip(&containing)
            .map(|(g, inside)| {
                let pick: Vec<&Polytope> = g.iter().filter(|(j, _)| inside.contains(j)).map(|(_, s)| s).collect();
                if pick.is_empty() {
                    g.iter().map(|(_, s)| s).collect()
                } else {
                    pick
                }
            })
            .collect();
        if choices.iter().any(Vec::is_empty) {
            return Err(FilterError::Fault("an obstacle has no certified set".into()));
        }
        let mut idx = vec![0usize; choices.len()];
        for _ in 0..MAX_RECOVERY_COMBINATIONS {
            let sets: Vec<&Polytope> = choices.iter().zip(&idx).map(|(c, &k)| c[k]).collect();
            for slack in [0.0, 1e-10, RECOVERY_SLACK] {
                if let Some(u) = recovery_lp(&self.sys, x, &sets, &self.controls, slack)? {
                    return Ok(self.project_input(&u));
                }
            }
            // Odometer over the per-obstacle choices.
            let mut d = 0;
            loop {
                if d == idx.len() {
                    return Err(FilterError::Fault(format!("recovery LP infeasible at {x:?}")));
                }
                idx[d] += 1;
                if idx[d] < choices[d].len() {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
        Err(FilterError::Fault(format!("recovery LP infeasible at {x:?}")))
    }
}

/// `min ‖u‖₁  s.t.  u ∈ U,  A x + B u ∈ S` for every `S` in `sets`, each
/// offset relaxed by `slack`. `None` when infeasible.
pub fn recovery_lp(
    sys: &LinearSystem,
    x: &[f64],
    sets: &[&Polytope],
    controls: &Polytope,
    slack: f64,
) -> Result<Option<Vec<f64>>, FilterError> {
    let (n, m) = (sys.n(), sys.m());
    if x.len() != n || controls.dim() != m || sets.iter().any(|s| s.dim() != n) {
        return Err(FilterError::InvalidInput("dimension mismatch in recovery LP".into()));
    }
    let free = sys.step(x, &vec![0.0; m]);
    let b = sys.b();
    // Variables [u, s] with |u_i| <= s_i.
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..m {
        let mut r = vec![0.0; 2 * m];
        r[i] = 1.0;
        r[m + i] = -1.0;
        rows.push((r.clone(), 0.0));
        r[i] = -1.0;
        rows.push((r, 0.0));
    }
    for (a, g) in controls.rows() {
        let mut r = vec![0.0; 2 * m];
        r[..m].copy_from_slice(a);
        rows.push((r, g));
    }
    for set in sets {
        for (c, d) in set.rows() {
            let mut r = vec![0.0; 2 * m];
            for j in 0..m {
                r[j] = (0..n).map(|k| c[k] * b[(k, j)]).sum();
            }
            let cx: f64 = c.iter().zip(&free).map(|(a, v)| a * v).sum();
            rows.push((r, d - cx + slack));
        }
    }
    let poly = Polytope::from_rows(2 * m, &rows)?;
    let mut cost = vec![0.0; 2 * m];
    cost[m..].iter_mut().for_each(|c| *c = 1.0);
    let sol = lp_solve(&cost, &poly, Sense::Min)?;
    Ok(match sol.status {
        LpStatus::Optimal => sol.point.map(|p| p[..m].to_vec()),
        _ => None,
    })
}

fn norm2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
