//! Best-first branch-and-bound over the face binaries.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::rc::Rc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::active_set::ActiveSetSolver;
use super::admm::AdmmSolver;
use super::qp::{QpData, QpMethod, QpSettings, QpSolution, QpStatus, WarmStart};
use crate::encode::MiqpProblem;
use crate::geometry::{is_empty, Polytope};

/// Relative row violation under which a rounded point counts as feasible.
const EXACT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BnbSettings {
    pub qp: QpSettings,
    /// Nodes whose bound is at least `incumbent - prune_tol` are discarded.
    pub prune_tol: f64,
    /// Slack allowed when testing whether a relaxed point already lies in a face set.
    pub membership_tol: f64,
    pub max_nodes: usize,
    /// Emit one structured `debug` line per solve.
    pub trace: bool,
    /// Keep a [`NodeRecord`] per processed node in the result.
    #[serde(default)]
    pub record_nodes: bool,
}

impl Default for BnbSettings {
    fn default() -> Self {
        Self {
            qp: QpSettings::default(),
            prune_tol: 1e-9,
            membership_tol: 1e-6,
            max_nodes: 100_000,
            trace: false,
            record_nodes: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MiqpStatus {
    Optimal,
    Infeasible,
    BudgetExceeded,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveStats {
    pub qp_solves: usize,
    pub nodes: usize,
    pub wall_time_us: u64,
    pub qp_iterations: usize,
    pub max_depth: usize,
    pub numerical_failures: usize,
    pub lp_checks: usize,
}

/// One processed node, for inspecting the search tree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeRecord {
    pub id: usize,
    pub parent: Option<usize>,
    pub depth: usize,
    /// Objective of the node relaxation; `None` when it was infeasible or failed.
    pub relaxation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiqpResult {
    pub status: MiqpStatus,
    pub u_opt: Option<Vec<f64>>,
    pub z: Option<Vec<f64>>,
    pub objective: Option<f64>,
    /// Obstacle index to the selected face at step k+1.
    pub active_faces: BTreeMap<usize, usize>,
    /// Binary values in `binary_indices` order.
    pub assignment: Option<Vec<u8>>,
    pub stats: SolveStats,
    pub warm_start: Option<WarmStart>,
    /// Filled only with [`BnbSettings::record_nodes`].
    pub nodes: Vec<NodeRecord>,
}

impl MiqpResult {
    fn empty(status: MiqpStatus, stats: SolveStats, nodes: Vec<NodeRecord>) -> Self {
        Self {
            status,
            u_opt: None,
            z: None,
            objective: None,
            active_faces: BTreeMap::new(),
            assignment: None,
            stats,
            warm_start: None,
            nodes,
        }
    }
}

struct Node {
    bound: f64,
    depth: usize,
    seq: usize,
    parent: Option<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    warm: Option<Rc<WarmStart>>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // Max-heap order: the smallest bound, then the deepest, then the oldest.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then(self.depth.cmp(&other.depth))
            .then(other.seq.cmp(&self.seq))
    }
}

struct Incumbent {
    objective: f64,
    solution: QpSolution,
    assignment: Vec<f64>,
}

/// Solver state reusable across problems that share `(Q, A)`.
#[derive(Debug, Clone)]
pub struct MiqpSolver {
    backend: Backend,
    settings: BnbSettings,
}

#[derive(Debug, Clone)]
enum Backend {
    ActiveSet(ActiveSetSolver),
    Admm(Box<AdmmSolver>),
}

impl MiqpSolver {
    pub fn new(problem: &MiqpProblem, settings: BnbSettings) -> Self {
        let backend = match settings.qp.method {
            QpMethod::ActiveSet => Backend::ActiveSet(ActiveSetSolver::new(settings.qp)),
            QpMethod::Admm => Backend::Admm(Box::new(AdmmSolver::new(
                &problem.hessian,
                &problem.constraints,
                &problem.binary_indices,
                settings.qp,
            ))),
        };
        Self { backend, settings }
    }

    pub fn settings(&self) -> &BnbSettings {
        &self.settings
    }

    fn qp_solve(&mut self, problem: &MiqpProblem, lower: &[f64], upper: &[f64], warm: Option<&WarmStart>, stats: &mut SolveStats) -> QpSolution {
        stats.qp_solves += 1;
        let sol = match &mut self.backend {
            Backend::ActiveSet(solver) => solver.solve(&QpData {
                hessian: &problem.hessian,
                linear: &problem.linear,
                constraints: &problem.constraints,
                lower: &problem.lower,
                upper: &problem.upper,
                var_lower: lower,
                var_upper: upper,
            }),
            Backend::Admm(solver) => solver.solve(&problem.linear, &problem.lower, &problem.upper, lower, upper, warm),
        };
        stats.qp_iterations += sol.iterations;
        sol
    }

    /// Solves `problem` to global optimality or until `budget` runs out.
    pub fn solve(&mut self, problem: &MiqpProblem, budget: Option<Duration>, warm: Option<&WarmStart>) -> MiqpResult {
        let start = Instant::now();
        let mut stats = SolveStats::default();
        let mut heap = BinaryHeap::new();
        let mut seq = 0usize;
        let mut incumbent: Option<Incumbent> = None;
        let mut budget_hit = false;
        let mut records = Vec::new();
        heap.push(Node {
            bound: f64::NEG_INFINITY,
            depth: 0,
            seq,
            parent: None,
            lower: problem.var_lower.clone(),
            upper: problem.var_upper.clone(),
            warm: warm.cloned().map(Rc::new),
        });

        while let Some(node) = heap.pop() {
            if let Some(inc) = &incumbent {
                if node.bound >= inc.objective - self.settings.prune_tol {
                    continue;
                }
            }
            if budget.is_some_and(|b| start.elapsed() >= b) || stats.nodes >= self.settings.max_nodes {
                budget_hit = true;
                break;
            }
            stats.nodes += 1;
            stats.max_depth = stats.max_depth.max(node.depth);
            let sol = self.qp_solve(problem, &node.lower, &node.upper, node.warm.as_deref(), &mut stats);
            if self.settings.record_nodes {
                records.push(NodeRecord {
                    id: node.seq,
                    parent: node.parent,
                    depth: node.depth,
                    relaxation: (sol.status == QpStatus::Optimal).then_some(sol.objective),
                });
            }
            let relaxed_bound = match sol.status {
                QpStatus::Infeasible => continue,
                QpStatus::Optimal => sol.objective.max(node.bound),
                QpStatus::NumericalFailure => {
                    stats.numerical_failures += 1;
                    stats.lp_checks += 1;
                    if !node_feasible_lp(problem, &node.lower, &node.upper) {
                        continue;
                    }
                    node.bound
                }
            };
            if let Some(inc) = &incumbent {
                if relaxed_bound >= inc.objective - self.settings.prune_tol {
                    continue;
                }
            }

            let plan = if sol.status == QpStatus::Optimal {
                completion(problem, &sol.x, &node.lower, &node.upper, self.settings.membership_tol)
            } else {
                // No trustworthy point: branch on the first free binary.
                problem
                    .binary_indices
                    .iter()
                    .copied()
                    .find(|&b| node.lower[b] < node.upper[b])
                    .map_or(Completion::Dead, Completion::Branch)
            };
            match plan {
                Completion::Complete(assignment) => {
                    let (lo, hi) = fixed_bounds(problem, &node.lower, &node.upper, &assignment);
                    // The rounded relaxed point is usually already feasible for the
                    // fixed problem, and then it is optimal there too.
                    let mut rounded = sol.x.clone();
                    for (k, &b) in problem.binary_indices.iter().enumerate() {
                        rounded[b] = assignment[k];
                    }
                    let exact = sol.polished || matches!(self.backend, Backend::ActiveSet(_));
                    let candidate = if exact && violation(problem, &rounded, &lo, &hi) <= EXACT_TOL {
                        let mut exact = sol.clone();
                        exact.objective = problem.objective(&rounded);
                        exact.x = rounded;
                        exact
                    } else {
                        self.qp_solve(problem, &lo, &hi, Some(&sol.warm_start()), &mut stats)
                    };
                    if candidate.status == QpStatus::Optimal
                        && incumbent.as_ref().is_none_or(|inc| candidate.objective < inc.objective)
                    {
                        incumbent = Some(Incumbent {
                            objective: candidate.objective,
                            solution: candidate,
                            assignment,
                        });
                    }
                }
                Completion::Dead => {}
                Completion::Branch(k) => {
                    let warm = Rc::new(sol.warm_start());
                    for v in [0.0, 1.0] {
                        seq += 1;
                        let mut lower = node.lower.clone();
                        let mut upper = node.upper.clone();
                        lower[k] = v;
                        upper[k] = v;
                        heap.push(Node {
                            bound: relaxed_bound,
                            depth: node.depth + 1,
                            seq,
                            parent: Some(node.seq),
                            lower,
                            upper,
                            warm: Some(warm.clone()),
                        });
                    }
                }
            }
        }

        stats.wall_time_us = start.elapsed().as_micros() as u64;
        let status = match (&incumbent, budget_hit) {
            (_, true) => MiqpStatus::BudgetExceeded,
            (Some(_), false) => MiqpStatus::Optimal,
            (None, false) => MiqpStatus::Infeasible,
        };
        if self.settings.trace {
            tracing::debug!(
                target: "misc::solve",
                status = ?status,
                nodes = stats.nodes,
                qp_solves = stats.qp_solves,
                qp_iterations = stats.qp_iterations,
                max_depth = stats.max_depth,
                objective = incumbent.as_ref().map(|i| i.objective),
                wall_time_us = stats.wall_time_us,
                "miqp solve"
            );
        }
        let Some(inc) = incumbent else {
            return MiqpResult::empty(status, stats, records);
        };
        let layout = &problem.layout;
        let mut active_faces = BTreeMap::new();
        for slot in &problem.faces {
            let pos = problem.binary_indices.iter().position(|&b| b == slot.p_next).expect("face binary");
            if inc.assignment[pos] == 0.0 {
                active_faces.entry(slot.obstacle).or_insert(slot.face);
            }
        }
        MiqpResult {
            status,
            u_opt: Some(inc.solution.x[layout.u.clone()].to_vec()),
            objective: Some(inc.objective),
            active_faces,
            assignment: Some(inc.assignment.iter().map(|&v| v as u8).collect()),
            stats,
            warm_start: Some(inc.solution.warm_start()),
            z: Some(inc.solution.x),
            nodes: records,
        }
    }
}

/// One-shot branch-and-bound with a wall-clock budget in milliseconds.
pub fn branch_and_bound(problem: &MiqpProblem, settings: &BnbSettings, budget_ms: f64) -> MiqpResult {
    let budget = (budget_ms.is_finite() && budget_ms > 0.0).then(|| Duration::from_secs_f64(budget_ms / 1e3));
    MiqpSolver::new(problem, *settings).solve(problem, budget, None)
}

enum Completion {
    /// Binary values (in `binary_indices` order) that make the relaxed point feasible.
    Complete(Vec<f64>),
    /// Variable index to branch on.
    Branch(usize),
    /// No admissible assignment within this node.
    Dead,
}

/// Tries to round the relaxed point into a feasible assignment: a free
/// binary is set to 0 exactly where its rows already hold without Big-M
/// relaxation. Otherwise returns the most fractional free binary of an
/// unsatisfied group (ties to the lowest index).
fn completion(problem: &MiqpProblem, z: &[f64], lower: &[f64], upper: &[f64], tol: f64) -> Completion {
    let mut plain = z.to_vec();
    for &b in &problem.binary_indices {
        plain[b] = 0.0;
    }
    let values = problem.constraints.mul_vec(&plain);
    let holds = |r: usize| values[r] <= problem.upper[r] + tol * (1.0 + problem.upper[r].abs());

    let mut value = vec![1.0; problem.num_vars()];
    // (obstacle, step) -> (satisfied, free binaries)
    let mut groups: BTreeMap<(usize, usize), (bool, Vec<usize>)> = BTreeMap::new();
    for slot in &problem.faces {
        for (step, idx) in [(0usize, slot.p_now), (1, slot.p_next)] {
            let g = groups.entry((slot.obstacle, step)).or_insert((false, Vec::new()));
            if upper[idx] == 0.0 {
                // Enforced by the relaxation itself.
                value[idx] = 0.0;
                g.0 = true;
            } else if lower[idx] < upper[idx] {
                let ok = if step == 0 {
                    holds(slot.obstacle_row)
                } else {
                    !slot.cis_empty && slot.cis_rows.clone().all(holds)
                };
                if ok {
                    value[idx] = 0.0;
                    g.0 = true;
                }
                g.1.push(idx);
            }
        }
    }
    if groups.values().all(|g| g.0) {
        return Completion::Complete(problem.binary_indices.iter().map(|&b| value[b]).collect());
    }
    let mut best: Option<(f64, usize)> = None;
    for (_, cands) in groups.values().filter(|g| !g.0) {
        for &idx in cands {
            let frac = z[idx].min(1.0 - z[idx]);
            if best.is_none_or(|(f, i)| frac > f || (frac == f && idx < i)) {
                best = Some((frac, idx));
            }
        }
    }
    match best {
        Some((_, idx)) => Completion::Branch(idx),
        None => Completion::Dead,
    }
}

fn violation(problem: &MiqpProblem, z: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let rows = problem.constraints.mul_vec(z);
    let row_viol = rows
        .iter()
        .zip(problem.lower.iter().zip(&problem.upper))
        .map(|(v, (l, u))| (l - v).max(v - u) / (1.0 + l.abs().min(u.abs()).min(1e6)));
    let var_viol = z.iter().zip(lower.iter().zip(upper)).map(|(v, (l, u))| (l - v).max(v - u));
    row_viol.chain(var_viol).fold(0.0, f64::max)
}

fn fixed_bounds(problem: &MiqpProblem, lower: &[f64], upper: &[f64], assignment: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut lo = lower.to_vec();
    let mut hi = upper.to_vec();
    for (k, &b) in problem.binary_indices.iter().enumerate() {
        lo[b] = assignment[k];
        hi[b] = assignment[k];
    }
    (lo, hi)
}

/// LP feasibility of the node's continuous relaxation, used when the QP
/// subsolver cannot decide.
fn node_feasible_lp(problem: &MiqpProblem, lower: &[f64], upper: &[f64]) -> bool {
    let n = problem.num_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let mut dense = vec![vec![0.0; n]; problem.num_rows()];
    for (r, c, v) in problem.constraints.triplets() {
        dense[r][c] = v;
    }
    for (r, a) in dense.into_iter().enumerate() {
        if problem.upper[r].is_finite() {
            rows.push((a.clone(), problem.upper[r]));
        }
        if problem.lower[r].is_finite() {
            rows.push((a.iter().map(|v| -v).collect(), -problem.lower[r]));
        }
    }
    for j in 0..n {
        let mut e = vec![0.0; n];
        if upper[j].is_finite() {
            e[j] = 1.0;
            rows.push((e.clone(), upper[j]));
        }
        if lower[j].is_finite() {
            e[j] = -1.0;
            rows.push((e, -lower[j]));
        }
    }
    match Polytope::from_rows(n, &rows).and_then(|p| is_empty(&p)) {
        Ok(empty) => !empty,
        // Undecidable: keep the node rather than risk a false infeasible.
        Err(_) => true,
    }
}
