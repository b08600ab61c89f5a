//! Assembly of the one-step problem into `min ½z'Qz + q'z  s.t.  l <= A z <= u`.
//!
//! Decision vector layout: `z = [x_k, x_{k+1}, u_k, p]` where `p` holds, for
//! obstacle `i` and face `j` in ascending order, the pair `[p_ijk, p_ij(k+1)]`.
//! A binary equal to 0 activates its half-space (or its CIS), 1 relaxes it by
//! the Big-M constant.
//!
//! Row blocks, in order: dynamics, state polytope, obstacle faces (step k),
//! CIS rows (step k+1), control polytope, per-obstacle cardinality.

use std::fmt::Write as _;
use std::ops::Range;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{lp_solve, GeometryError, LpStatus, Polytope, Sense};
use crate::invariance::{compute_cis, system_hash, AdmissiblePair, CisAtlas, CisConfig, LinearSystem};
use crate::world::Environment;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("initial state infeasible: {0}")]
    InitialStateInfeasible(String),
    #[error("atlas digest does not match the environment")]
    AtlasMismatch,
    #[error("atlas is missing face ({0}, {1})")]
    MissingFace(usize, usize),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("workspace is unbounded")]
    UnboundedWorkspace,
    #[error("obstacle-free invariant set: {0}")]
    ConvexSet(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub col_ptr: Vec<usize>,
    pub row_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CscMatrix {
    /// Builds from `(row, col, value)` triplets; duplicates are summed, explicit zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = vec![0usize; ncols + 1];
        let mut row_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            row_idx.push(r);
            values.push(v);
            col_ptr[c + 1] += 1;
            last = Some((r, c));
        }
        for c in 0..ncols {
            col_ptr[c + 1] += col_ptr[c];
        }
        let mut m = Self {
            nrows,
            ncols,
            col_ptr,
            row_idx,
            values,
        };
        m.drop_zeros();
        m
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let mut col_ptr = vec![0usize; self.ncols + 1];
        let mut row_idx = Vec::with_capacity(self.row_idx.len());
        let mut values = Vec::with_capacity(self.values.len());
        for c in 0..self.ncols {
            for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                if self.values[k] != 0.0 {
                    row_idx.push(self.row_idx[k]);
                    values.push(self.values[k]);
                }
            }
            col_ptr[c + 1] = row_idx.len();
        }
        self.col_ptr = col_ptr;
        self.row_idx = row_idx;
        self.values = values;
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        (self.col_ptr[c]..self.col_ptr[c + 1])
            .find(|&k| self.row_idx[k] == r)
            .map_or(0.0, |k| self.values[k])
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.ncols).flat_map(move |c| (self.col_ptr[c]..self.col_ptr[c + 1]).map(move |k| (self.row_idx[k], c, self.values[k])))
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        for c in 0..self.ncols {
            let xc = x[c];
            if xc != 0.0 {
                for k in self.col_ptr[c]..self.col_ptr[c + 1] {
                    y[self.row_idx[k]] += self.values[k] * xc;
                }
            }
        }
        y
    }

    /// Diagonal entries (square matrices).
    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.ncols.min(self.nrows)).map(|c| self.get(c, c)).collect()
    }
}

/// Named index ranges into `z`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub n: usize,
    pub m: usize,
    pub num_binaries: usize,
    pub x_now: Range<usize>,
    pub x_next: Range<usize>,
    pub u: Range<usize>,
    pub p: Range<usize>,
}

impl Layout {
    fn new(n: usize, m: usize, num_binaries: usize) -> Self {
        Self {
            n,
            m,
            num_binaries,
            x_now: 0..n,
            x_next: n..2 * n,
            u: 2 * n..2 * n + m,
            p: 2 * n + m..2 * n + m + num_binaries,
        }
    }

    pub fn len(&self) -> usize {
        self.p.end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row ranges of the six constraint blocks, in stacking order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowBlocks {
    pub dynamics: Range<usize>,
    pub state: Range<usize>,
    pub obstacle: Range<usize>,
    pub cis: Range<usize>,
    pub control: Range<usize>,
    pub cardinality: Range<usize>,
}

impl RowBlocks {
    pub fn ordered(&self) -> [(&'static str, Range<usize>); 6] {
        [
            ("dynamics", self.dynamics.clone()),
            ("state", self.state.clone()),
            ("obstacle", self.obstacle.clone()),
            ("cis", self.cis.clone()),
            ("control", self.control.clone()),
            ("cardinality", self.cardinality.clone()),
        ]
    }
}

/// Where one obstacle face lives inside the problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaceSlot {
    pub obstacle: usize,
    pub face: usize,
    /// Index into `z` of `p_ijk`.
    pub p_now: usize,
    /// Index into `z` of `p_ij(k+1)`.
    pub p_next: usize,
    pub obstacle_row: usize,
    pub cis_rows: Range<usize>,
    pub cis_empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BigMMode {
    Global,
    PerRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BigMPolicy {
    pub mode: BigMMode,
    pub global_value: f64,
    pub margin: f64,
}

impl Default for BigMPolicy {
    fn default() -> Self {
        Self {
            mode: BigMMode::PerRow,
            global_value: 1e3,
            margin: 1.0,
        }
    }
}

/// Big-M constants for the obstacle rows (one per face) and the CIS rows.
#[derive(Debug, Clone, PartialEq)]
pub struct BigMValues {
    pub obstacle: Vec<f64>,
    pub cis: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiqpProblem {
    pub hessian: CscMatrix,
    pub linear: Vec<f64>,
    pub constraints: Arc<CscMatrix>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Per-variable bounds; binaries carry `[0, 1]` or a fixed value.
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
    pub binary_indices: Vec<usize>,
    pub group_rows: Vec<usize>,
    pub layout: Layout,
    pub blocks: RowBlocks,
    pub faces: Vec<FaceSlot>,
    pub system_hash: String,
}

impl MiqpProblem {
    pub fn num_vars(&self) -> usize {
        self.layout.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.nrows
    }

    /// Binaries whose bounds still allow both values.
    pub fn free_binaries(&self) -> Vec<usize> {
        self.binary_indices
            .iter()
            .copied()
            .filter(|&k| self.var_lower[k] < self.var_upper[k])
            .collect()
    }

    pub fn objective(&self, z: &[f64]) -> f64 {
        let hz = self.hessian.mul_vec(z);
        0.5 * hz.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + self.linear.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()
    }

    /// Largest bound violation of `A z` and of the variable bounds.
    pub fn max_violation(&self, z: &[f64]) -> f64 {
        let az = self.constraints.mul_vec(z);
        let rows = az
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0));
        let vars = z
            .iter()
            .zip(self.var_lower.iter().zip(&self.var_upper))
            .map(|(v, (l, u))| (l - v).max(v - u).max(0.0));
        rows.chain(vars).fold(0.0, f64::max)
    }

    /// Text dump: layout header, triplet list, bounds.
    pub fn debug_dump(&self) -> String {
        let mut s = String::new();
        let l = &self.layout;
        let _ = writeln!(s, "# miqp n={} m={} binaries={} vars={} rows={}", l.n, l.m, l.num_binaries, self.num_vars(), self.num_rows());
        let _ = writeln!(s, "layout x_now={:?} x_next={:?} u={:?} p={:?}", l.x_now, l.x_next, l.u, l.p);
        for (name, r) in self.blocks.ordered() {
            let _ = writeln!(s, "block {name} {}..{}", r.start, r.end);
        }
        let _ = writeln!(s, "hessian {}", self.hessian.nnz());
        for (r, c, v) in self.hessian.triplets() {
            let _ = writeln!(s, "{r} {c} {v:.17e}");
        }
        let _ = writeln!(s, "linear {}", self.linear.len());
        for v in &self.linear {
            let _ = writeln!(s, "{v:.17e}");
        }
        let _ = writeln!(s, "constraints {}", self.constraints.nnz());
        for (r, c, v) in self.constraints.triplets() {
            let _ = writeln!(s, "{r} {c} {v:.17e}");
        }
        let _ = writeln!(s, "row_bounds {}", self.num_rows());
        for (lo, hi) in self.lower.iter().zip(&self.upper) {
            let _ = writeln!(s, "{lo:.17e} {hi:.17e}");
        }
        let _ = writeln!(s, "var_bounds {}", self.num_vars());
        for (lo, hi) in self.var_lower.iter().zip(&self.var_upper) {
            let _ = writeln!(s, "{lo:.17e} {hi:.17e}");
        }
        let _ = writeln!(s, "binaries {:?}", self.binary_indices);
        s
    }
}

/// `max_{x ∈ box} (a.x - b)` floored at zero, plus `margin`.
pub fn row_big_m(a: &[f64], b: f64, bbox: &Polytope, margin: f64) -> Result<f64, EncodeError> {
    let sol = lp_solve(a, bbox, Sense::Max)?;
    match sol.status {
        LpStatus::Optimal => Ok((sol.objective - b).max(0.0) + margin),
        LpStatus::Unbounded => Err(EncodeError::UnboundedWorkspace),
        LpStatus::Infeasible => Err(EncodeError::Geometry(GeometryError::Empty)),
    }
}

fn workspace_bbox(env: &Environment) -> Result<Polytope, EncodeError> {
    let (lo, hi) = env.state_polytope().bounding_box().map_err(|e| match e {
        GeometryError::Unbounded => EncodeError::UnboundedWorkspace,
        other => other.into(),
    })?;
    Ok(Polytope::from_box(&lo, &hi)?)
}

/// Big-M constants for every obstacle face row and CIS row.
pub fn big_m_values(env: &Environment, atlas: &CisAtlas, policy: &BigMPolicy) -> Result<BigMValues, EncodeError> {
    let faces: Vec<_> = env.obstacle_faces().into_iter().flatten().collect();
    if policy.mode == BigMMode::Global {
        return Ok(BigMValues {
            obstacle: vec![policy.global_value; faces.len()],
            cis: atlas.entries.iter().map(|e| vec![policy.global_value; e.set.num_rows()]).collect(),
        });
    }
    let bbox = workspace_bbox(env)?;
    let obstacle = faces
        .iter()
        .map(|f| row_big_m(&f.normal, f.offset, &bbox, policy.margin))
        .collect::<Result<_, _>>()?;
    let cis = atlas
        .entries
        .iter()
        .map(|e| e.set.rows().map(|(a, b)| row_big_m(a, b, &bbox, policy.margin)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<_, _>>()?;
    Ok(BigMValues { obstacle, cis })
}

/// The state-independent part of the problem. [`ProblemTemplate::instantiate`]
/// fills in the current state and reference input.
#[derive(Debug, Clone)]
pub struct ProblemTemplate {
    base: MiqpProblem,
    state_polytope: Polytope,
    convex_set: Option<Polytope>,
    obstacle_faces: Vec<Vec<(Vec<f64>, f64)>>,
}

impl ProblemTemplate {
    pub fn new(sys: &LinearSystem, env: &Environment, atlas: &CisAtlas, policy: &BigMPolicy) -> Result<Self, EncodeError> {
        let hash = system_hash(sys, env);
        if atlas.system_hash != hash {
            return Err(EncodeError::AtlasMismatch);
        }
        let (n, m) = (sys.n(), sys.m());
        let faces = env.obstacle_faces();
        let num_faces: usize = faces.iter().map(Vec::len).sum();
        let layout = Layout::new(n, m, 2 * num_faces);
        let big_m = big_m_values(env, atlas, policy)?;
        let f_poly = env.state_polytope();
        let g_poly = env.control_polytope();

        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        let mut lower = Vec::new();
        let mut upper = Vec::new();
        let mut row = 0usize;
        let push_bounds = |lo: f64, hi: f64, lower: &mut Vec<f64>, upper: &mut Vec<f64>| {
            lower.push(lo);
            upper.push(hi);
        };

        // Dynamics: [A' - I, B', 0] z = -[x_k; 0].
        let dyn_start = row;
        for r in 0..n {
            trip.push((row, layout.x_now.start + r, -1.0));
            push_bounds(0.0, 0.0, &mut lower, &mut upper);
            row += 1;
        }
        for r in 0..n {
            for c in 0..n {
                trip.push((row, layout.x_now.start + c, sys.a()[(r, c)]));
            }
            trip.push((row, layout.x_next.start + r, -1.0));
            for c in 0..m {
                trip.push((row, layout.u.start + c, sys.b()[(r, c)]));
            }
            push_bounds(0.0, 0.0, &mut lower, &mut upper);
            row += 1;
        }
        let dynamics = dyn_start..row;

        // State polytope on x_k.
        let start = row;
        for (a, b) in f_poly.rows() {
            for (c, &v) in a.iter().enumerate() {
                trip.push((row, layout.x_now.start + c, v));
            }
            push_bounds(f64::NEG_INFINITY, b, &mut lower, &mut upper);
            row += 1;
        }
        let state = start..row;

        // Obstacle faces on x_k with Big-M on p_ijk.
        let mut slots = Vec::with_capacity(num_faces);
        let start = row;
        let mut flat = 0usize;
        for (i, fs) in faces.iter().enumerate() {
            for (j, face) in fs.iter().enumerate() {
                let p_now = layout.p.start + 2 * flat;
                for (c, &v) in face.normal.iter().enumerate() {
                    trip.push((row, layout.x_now.start + c, v));
                }
                trip.push((row, p_now, -big_m.obstacle[flat]));
                push_bounds(f64::NEG_INFINITY, face.offset, &mut lower, &mut upper);
                slots.push(FaceSlot {
                    obstacle: i,
                    face: j,
                    p_now,
                    p_next: p_now + 1,
                    obstacle_row: row,
                    cis_rows: 0..0,
                    cis_empty: false,
                });
                row += 1;
                flat += 1;
            }
        }
        let obstacle = start..row;

        // CIS rows on x_{k+1} with Big-M on p_ij(k+1).
        let start = row;
        for (flat, slot) in slots.iter_mut().enumerate() {
            let entry = atlas.get(slot.obstacle, slot.face).ok_or(EncodeError::MissingFace(slot.obstacle, slot.face))?;
            let first = row;
            for (k, (a, b)) in entry.set.rows().enumerate() {
                for (c, &v) in a.iter().enumerate() {
                    trip.push((row, layout.x_next.start + c, v));
                }
                trip.push((row, slot.p_next, -big_m.cis[flat][k]));
                push_bounds(f64::NEG_INFINITY, b, &mut lower, &mut upper);
                row += 1;
            }
            slot.cis_rows = first..row;
            slot.cis_empty = entry.empty;
        }
        // Without obstacles the filter is a plain QP, and the successor has to
        // stay in an invariant subset of P instead.
        let convex_set = if num_faces == 0 {
            let pair = AdmissiblePair { obstacle: 0, face: 0, state_region: f_poly.clone(), control_region: g_poly.clone() };
            let run = compute_cis(sys, &pair, &CisConfig::default()).map_err(|e| EncodeError::ConvexSet(e.to_string()))?;
            if run.empty {
                return Err(EncodeError::ConvexSet("no invariant subset of the state polytope".into()));
            }
            for (a, b) in run.set.rows() {
                for (c, &v) in a.iter().enumerate() {
                    trip.push((row, layout.x_next.start + c, v));
                }
                push_bounds(f64::NEG_INFINITY, b, &mut lower, &mut upper);
                row += 1;
            }
            Some(run.set)
        } else {
            None
        };
        let cis = start..row;

        // Control polytope on u.
        let start = row;
        for (a, b) in g_poly.rows() {
            for (c, &v) in a.iter().enumerate() {
                trip.push((row, layout.u.start + c, v));
            }
            push_bounds(f64::NEG_INFINITY, b, &mut lower, &mut upper);
            row += 1;
        }
        let control = start..row;

        // Cardinality: for each obstacle, one row per step.
        let start = row;
        let mut group_rows = Vec::new();
        for (i, fs) in faces.iter().enumerate() {
            for step in 0..2 {
                for s in slots.iter().filter(|s| s.obstacle == i) {
                    trip.push((row, if step == 0 { s.p_now } else { s.p_next }, 1.0));
                }
                push_bounds(0.0, (fs.len() - 1) as f64, &mut lower, &mut upper);
                group_rows.push(row);
                row += 1;
            }
        }
        let cardinality = start..row;

        let nvars = layout.len();
        let constraints = Arc::new(CscMatrix::from_triplets(row, nvars, &trip));
        let hess_trip: Vec<_> = layout.u.clone().map(|k| (k, k, 1.0)).collect();
        let hessian = CscMatrix::from_triplets(nvars, nvars, &hess_trip);
        let mut var_lower = vec![f64::NEG_INFINITY; nvars];
        let mut var_upper = vec![f64::INFINITY; nvars];
        let binary_indices: Vec<usize> = layout.p.clone().collect();
        for &k in &binary_indices {
            var_lower[k] = 0.0;
            var_upper[k] = 1.0;
        }
        let base = MiqpProblem {
            hessian,
            linear: vec![0.0; nvars],
            constraints,
            lower,
            upper,
            var_lower,
            var_upper,
            binary_indices,
            group_rows,
            layout,
            blocks: RowBlocks {
                dynamics,
                state,
                obstacle,
                cis,
                control,
                cardinality,
            },
            faces: slots,
            system_hash: hash,
        };
        Ok(Self {
            base,
            state_polytope: f_poly,
            convex_set,
            obstacle_faces: faces.iter().map(|fs| fs.iter().map(|f| (f.normal.clone(), f.offset)).collect()).collect(),
        })
    }

    pub fn base(&self) -> &MiqpProblem {
        &self.base
    }

    /// Invariant subset of P imposed on the successor when there are no obstacles.
    pub fn convex_set(&self) -> Option<&Polytope> {
        self.convex_set.as_ref()
    }

    /// Checks `x ∈ P ∩ D` (state polytope and at least one face per obstacle).
    pub fn check_state(&self, x: &[f64]) -> Result<(), EncodeError> {
        if x.len() != self.base.layout.n || x.iter().any(|v| !v.is_finite()) {
            return Err(EncodeError::InvalidInput(format!("state {x:?}")));
        }
        let viol = self.state_polytope.max_violation(x);
        if viol > 1e-9 {
            return Err(EncodeError::InitialStateInfeasible(format!("state polytope violated by {viol:.3e}")));
        }
        for (i, faces) in self.obstacle_faces.iter().enumerate() {
            if !faces.iter().any(|(a, b)| dot(a, x) <= b + 1e-9) {
                return Err(EncodeError::InitialStateInfeasible(format!("state inside obstacle {i}")));
            }
        }
        Ok(())
    }

    /// Problem for state `x` and reference input `u_ref`.
    pub fn instantiate(&self, x: &[f64], u_ref: &[f64]) -> Result<MiqpProblem, EncodeError> {
        if u_ref.len() != self.base.layout.m || u_ref.iter().any(|v| !v.is_finite()) {
            return Err(EncodeError::InvalidInput(format!("reference input {u_ref:?}")));
        }
        self.check_state(x)?;
        Ok(self.instantiate_unchecked(x, u_ref))
    }

    /// Like [`instantiate`](Self::instantiate) without the admissibility check.
    pub fn instantiate_unchecked(&self, x: &[f64], u_ref: &[f64]) -> MiqpProblem {
        let mut p = self.base.clone();
        let l = &p.layout;
        for r in 0..l.n {
            p.lower[p.blocks.dynamics.start + r] = -x[r];
            p.upper[p.blocks.dynamics.start + r] = -x[r];
        }
        for (k, idx) in l.u.clone().enumerate() {
            p.linear[idx] = -u_ref[k];
        }
        p
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Full assembly for one state and reference input.
pub fn build_problem(
    sys: &LinearSystem,
    env: &Environment,
    atlas: &CisAtlas,
    x_current: &[f64],
    u_ref: &[f64],
    policy: &BigMPolicy,
) -> Result<MiqpProblem, EncodeError> {
    ProblemTemplate::new(sys, env, atlas, policy)?.instantiate(x_current, u_ref)
}

/// Fixes every step-k binary from the known state: 0 where the face holds, 1 otherwise.
pub fn fix_step_k_binaries(problem: &MiqpProblem, x_current: &[f64]) -> Result<MiqpProblem, EncodeError> {
    let mut out = problem.clone();
    let a = &problem.constraints;
    let n = problem.layout.n;
    // Row-wise evaluation of the face rows restricted to x_k.
    let mut face_value = vec![0.0; problem.num_rows()];
    for c in problem.layout.x_now.clone() {
        for k in a.col_ptr[c]..a.col_ptr[c + 1] {
            face_value[a.row_idx[k]] += a.values[k] * x_current[c - problem.layout.x_now.start];
        }
    }
    debug_assert_eq!(x_current.len(), n);
    let mut satisfied_any = std::collections::BTreeMap::<usize, bool>::new();
    for slot in &problem.faces {
        let t = problem.upper[slot.obstacle_row];
        // Same relative slack the QP reduction grants constant rows.
        let holds = face_value[slot.obstacle_row] <= t + 1e-9 * (1.0 + t.abs());
        let v = if holds { 0.0 } else { 1.0 };
        out.var_lower[slot.p_now] = v;
        out.var_upper[slot.p_now] = v;
        *satisfied_any.entry(slot.obstacle).or_default() |= holds;
    }
    if let Some((i, _)) = satisfied_any.iter().find(|(_, &ok)| !ok) {
        return Err(EncodeError::InitialStateInfeasible(format!("every face of obstacle {i} is violated")));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csc_from_triplets_sums_duplicates() {
        let m = CscMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 2.0), (0, 0, 3.0), (1, 0, 0.0)]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 0), 4.0);
        assert_eq!(m.mul_vec(&[1.0, 1.0]), vec![4.0, 2.0]);
    }

    #[test]
    fn big_m_example_values() {
        let bbox = Polytope::from_box(&[0.0], &[100.0]).unwrap();
        assert_eq!(row_big_m(&[1.0], 5.0, &bbox, 1.0).unwrap(), 96.0);
        // Satisfied everywhere: floor at the margin.
        assert_eq!(row_big_m(&[1.0], 150.0, &bbox, 1.0).unwrap(), 1.0);
        let half = Polytope::from_rows(1, &[(vec![-1.0], 0.0)]).unwrap();
        assert!(matches!(row_big_m(&[1.0], 0.0, &half, 1.0), Err(EncodeError::UnboundedWorkspace)));
    }
}
