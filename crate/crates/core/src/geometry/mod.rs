//! H-representation polytopes and the small LP kernel behind every set
//! operation in the crate.
//!
//! A [`Polytope`] is `{x : A x <= b}` stored row-major. Emptiness is never a
//! stored flag; it is decided by an LP. Tolerances:
//!
//! - feasibility `1e-8` ([`FEASIBILITY_TOL`])
//! - containment slack `1e-7` ([`CONTAINMENT_TOL`])
//! - redundancy slack `1e-7` ([`REDUNDANCY_TOL`])

mod hrep;
mod project;
mod simplex;

pub use hrep::{parse_hrep, write_hrep};
pub use project::{project, MAX_INTERMEDIATE_ROWS, MAX_RAW_COMBINATIONS};

use serde::{Deserialize, Serialize};
use simplex::{solve_standard, StandardForm, StandardStatus};
use thiserror::Error;

pub const FEASIBILITY_TOL: f64 = 1e-8;
pub const CONTAINMENT_TOL: f64 = 1e-7;
pub const REDUNDANCY_TOL: f64 = 1e-7;

const LP_ITERATION_CAP: usize = 20_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("malformed polytope: {0}")]
    Malformed(String),
    #[error("operation requires a non-empty polytope")]
    Empty,
    #[error("polytope is unbounded")]
    Unbounded,
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("projection exceeded {cap} rows ({rows} rows while eliminating coordinate {coordinate})")]
    RowCapExceeded {
        cap: usize,
        rows: usize,
        coordinate: usize,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// `{x in R^dim : normals * x <= offsets}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    dim: usize,
    /// Row-major, `offsets.len() * dim` entries.
    normals: Vec<f64>,
    offsets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Min,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    /// Present iff `status == Optimal`.
    pub point: Option<Vec<f64>>,
}

impl Polytope {
    pub fn new(dim: usize, normals: Vec<f64>, offsets: Vec<f64>) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::Malformed("dimension must be positive".into()));
        }
        if normals.len() != offsets.len() * dim {
            return Err(GeometryError::Malformed(format!(
                "{} normal entries for {} rows of dimension {dim}",
                normals.len(),
                offsets.len()
            )));
        }
        if normals.iter().chain(&offsets).any(|v| !v.is_finite()) {
            return Err(GeometryError::Malformed("non-finite coefficient".into()));
        }
        for (r, &b) in offsets.iter().enumerate() {
            let row = &normals[r * dim..(r + 1) * dim];
            if b < 0.0 && row.iter().all(|&a| a == 0.0) {
                return Err(GeometryError::Malformed(format!(
                    "row {r} is all-zero with negative offset"
                )));
            }
        }
        Ok(Self {
            dim,
            normals,
            offsets,
        })
    }

    pub fn from_rows(dim: usize, rows: &[(Vec<f64>, f64)]) -> Result<Self, GeometryError> {
        let mut normals = Vec::with_capacity(rows.len() * dim);
        let mut offsets = Vec::with_capacity(rows.len());
        for (a, b) in rows {
            if a.len() != dim {
                return Err(GeometryError::DimensionMismatch {
                    expected: dim,
                    got: a.len(),
                });
            }
            normals.extend_from_slice(a);
            offsets.push(*b);
        }
        Self::new(dim, normals, offsets)
    }

    /// The whole space (no rows).
    pub fn universe(dim: usize) -> Self {
        Self {
            dim,
            normals: Vec::new(),
            offsets: Vec::new(),
        }
    }

    /// Canonical empty set: `x_0 <= -1` and `-x_0 <= -1`.
    pub fn empty(dim: usize) -> Self {
        let mut normals = vec![0.0; 2 * dim];
        normals[0] = 1.0;
        normals[dim] = -1.0;
        Self {
            dim,
            normals,
            offsets: vec![-1.0, -1.0],
        }
    }

    /// Axis-aligned box `lo <= x <= hi`.
    pub fn from_box(lo: &[f64], hi: &[f64]) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() {
            return Err(GeometryError::DimensionMismatch {
                expected: lo.len(),
                got: hi.len(),
            });
        }
        let dim = lo.len();
        let mut rows = Vec::with_capacity(2 * dim);
        for k in 0..dim {
            let mut a = vec![0.0; dim];
            a[k] = 1.0;
            rows.push((a.clone(), hi[k]));
            a[k] = -1.0;
            rows.push((a, -lo[k]));
        }
        Self::from_rows(dim, &rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.normals[r * self.dim..(r + 1) * self.dim]
    }

    pub fn offset(&self, r: usize) -> f64 {
        self.offsets[r]
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn normals(&self) -> &[f64] {
        &self.normals
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        (0..self.num_rows()).map(move |r| (self.row(r), self.offsets[r]))
    }

    pub fn push_row(&mut self, a: &[f64], b: f64) {
        assert_eq!(a.len(), self.dim, "row dimension");
        self.normals.extend_from_slice(a);
        self.offsets.push(b);
    }

    pub fn intersect(&self, other: &Polytope) -> Result<Polytope, GeometryError> {
        if self.dim != other.dim {
            return Err(GeometryError::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let mut out = self.clone();
        out.normals.extend_from_slice(&other.normals);
        out.offsets.extend_from_slice(&other.offsets);
        Ok(out)
    }

    /// Largest violation `max_r (a_r x - b_r)`, normalised by `|a_r|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.rows()
            .map(|(a, b)| {
                let norm = norm2(a);
                if norm == 0.0 {
                    -b
                } else {
                    (dot(a, x) - b) / norm
                }
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains_point(&self, x: &[f64], tol: f64) -> bool {
        self.num_rows() == 0 || self.max_violation(x) <= tol
    }

    /// Copy with every non-zero row scaled to a unit normal; all-zero rows dropped.
    pub fn normalized(&self) -> Polytope {
        let mut out = Polytope::universe(self.dim);
        for (a, b) in self.rows() {
            let n = norm2(a);
            if n > 0.0 {
                let scaled: Vec<f64> = a.iter().map(|v| v / n).collect();
                out.push_row(&scaled, b / n);
            } else if b < 0.0 {
                return Polytope::empty(self.dim);
            }
        }
        out
    }

    /// Unit normals, then rows sorted lexicographically by `(normal, offset)`.
    pub fn canonical(&self) -> Polytope {
        let n = self.normalized();
        let mut rows: Vec<(Vec<f64>, f64)> = n.rows().map(|(a, b)| (a.to_vec(), b)).collect();
        rows.sort_by(|x, y| {
            x.0.iter()
                .zip(&y.0)
                .map(|(p, q)| p.total_cmp(q))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(x.1.total_cmp(&y.1))
        });
        Polytope::from_rows(self.dim, &rows).expect("normalised rows are well formed")
    }

    /// Interval bounds of each coordinate (via LP).
    pub fn bounding_box(&self) -> Result<(Vec<f64>, Vec<f64>), GeometryError> {
        let mut lo = vec![0.0; self.dim];
        let mut hi = vec![0.0; self.dim];
        for k in 0..self.dim {
            let mut c = vec![0.0; self.dim];
            c[k] = 1.0;
            for (sense, slot) in [(Sense::Min, &mut lo), (Sense::Max, &mut hi)] {
                let sol = lp_solve(&c, self, sense)?;
                match sol.status {
                    LpStatus::Optimal => slot[k] = sol.objective,
                    LpStatus::Infeasible => return Err(GeometryError::Empty),
                    LpStatus::Unbounded => return Err(GeometryError::Unbounded),
                }
            }
        }
        Ok((lo, hi))
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Optimises `cost . x` over `poly` through the dual `min b'y, A'y = c, y >= 0`.
pub fn lp_solve(cost: &[f64], poly: &Polytope, sense: Sense) -> Result<LpSolution, GeometryError> {
    if cost.len() != poly.dim {
        return Err(GeometryError::DimensionMismatch {
            expected: poly.dim,
            got: cost.len(),
        });
    }
    let work = poly.normalized();
    let c: Vec<f64> = match sense {
        Sense::Max => cost.to_vec(),
        Sense::Min => cost.iter().map(|v| -v).collect(),
    };
    let solved = solve_max(&c, &work)?;
    Ok(match solved {
        MaxOutcome::Optimal(point) => LpSolution {
            status: LpStatus::Optimal,
            objective: dot(cost, &point),
            point: Some(point),
        },
        MaxOutcome::Infeasible => LpSolution {
            status: LpStatus::Infeasible,
            objective: f64::NAN,
            point: None,
        },
        MaxOutcome::Unbounded => LpSolution {
            status: LpStatus::Unbounded,
            objective: match sense {
                Sense::Max => f64::INFINITY,
                Sense::Min => f64::NEG_INFINITY,
            },
            point: None,
        },
    })
}

enum MaxOutcome {
    Optimal(Vec<f64>),
    Infeasible,
    Unbounded,
}

/// `max c.x` over a polytope with unit-normal rows.
fn solve_max(c: &[f64], poly: &Polytope) -> Result<MaxOutcome, GeometryError> {
    let dim = poly.dim;
    let rows = poly.num_rows();
    if rows == 0 {
        return Ok(if c.iter().all(|&v| v == 0.0) {
            MaxOutcome::Optimal(vec![0.0; dim])
        } else {
            MaxOutcome::Unbounded
        });
    }
    // The dual's columns are exactly the polytope's rows.
    let sol = solve_standard(&StandardForm {
        rows: dim,
        cols: &poly.normals,
        rhs: c,
        cost: &poly.offsets,
        max_iterations: LP_ITERATION_CAP,
    })?;
    match sol.status {
        StandardStatus::Optimal => Ok(MaxOutcome::Optimal(sol.multipliers)),
        // Dual unbounded: a Farkas ray certifies primal infeasibility.
        StandardStatus::Unbounded => Ok(MaxOutcome::Infeasible),
        StandardStatus::Infeasible => {
            // Dual infeasible: primal is infeasible or unbounded. Decide feasibility.
            let zero = vec![0.0; dim];
            match solve_max(&zero, poly)? {
                MaxOutcome::Optimal(_) => Ok(MaxOutcome::Unbounded),
                other => Ok(other),
            }
        }
    }
}

pub fn is_empty(poly: &Polytope) -> Result<bool, GeometryError> {
    let sol = lp_solve(&vec![0.0; poly.dim], poly, Sense::Max)?;
    Ok(sol.status == LpStatus::Infeasible)
}

/// Removes every redundant row. Rows are dropped one at a time, so each
/// redundancy LP runs against the already-pruned set.
pub fn reduce(poly: &Polytope) -> Result<Polytope, GeometryError> {
    if is_empty(poly)? {
        return Err(GeometryError::Empty);
    }
    let dim = poly.dim;
    let mut rows = dedup_rows(&poly.normalized());
    if rows.len() > CLARKSON_MIN_ROWS {
        let (center, radius) = chebyshev_center(&Polytope::from_rows(dim, &rows)?)?;
        if radius > 1e-9 {
            rows = clarkson_candidates(&rows, &center)?;
        }
    }
    let mut r = 0;
    while r < rows.len() {
        let (a, b) = rows[r].clone();
        let mut rest = Polytope::universe(dim);
        for (k, (ak, bk)) in rows.iter().enumerate() {
            if k != r {
                rest.push_row(ak, *bk);
            }
        }
        let sol = solve_max(&a, &rest)?;
        let keep = match sol {
            MaxOutcome::Optimal(p) => dot(&a, &p) > b + REDUNDANCY_TOL,
            MaxOutcome::Unbounded => true,
            MaxOutcome::Infeasible => {
                return Err(GeometryError::NumericalFailure(
                    "row removal made a non-empty polytope infeasible".into(),
                ))
            }
        };
        if keep {
            r += 1;
        } else {
            rows.remove(r);
        }
    }
    Polytope::from_rows(dim, &rows)
}

/// Above this many rows, [`reduce`] first prunes with [`clarkson_candidates`].
const CLARKSON_MIN_ROWS: usize = 48;

/// Clarkson's output-sensitive redundancy filter. Each row is tested by an LP
/// over the rows already known to be irredundant; a witness point outside the
/// row lets a ray from the interior point `center` reveal one more irredundant
/// row. Ties at lower-dimensional faces may keep a weakly redundant row, so the
/// caller still runs the exact test over the (small) result.
fn clarkson_candidates(rows: &[(Vec<f64>, f64)], center: &[f64]) -> Result<Vec<(Vec<f64>, f64)>, GeometryError> {
    let dim = center.len();
    let mut known = vec![false; rows.len()];
    let mut basis = Polytope::universe(dim);
    for r in 0..rows.len() {
        while !known[r] {
            let (a, b) = (&rows[r].0, rows[r].1);
            let mut probe = basis.clone();
            // Keeps the LP bounded without hiding a violation.
            probe.push_row(a, b + 1.0);
            let witness = match solve_max(a, &probe)? {
                MaxOutcome::Optimal(x) if dot(a, &x) > b + REDUNDANCY_TOL => x,
                MaxOutcome::Optimal(_) => break,
                _ => return Err(GeometryError::NumericalFailure("Clarkson probe LP failed".into())),
            };
            let d: Vec<f64> = witness.iter().zip(center).map(|(w, c)| w - c).collect();
            let mut hit: Option<(f64, usize)> = None;
            for (k, (ak, bk)) in rows.iter().enumerate() {
                let ad = dot(ak, &d);
                if known[k] || ad <= 0.0 {
                    continue;
                }
                let t = (bk - dot(ak, center)) / ad;
                if hit.is_none_or(|(best, _)| t < best) {
                    hit = Some((t, k));
                }
            }
            let Some((_, k)) = hit else {
                return Err(GeometryError::NumericalFailure("Clarkson ray left through no row".into()));
            };
            known[k] = true;
            basis.push_row(&rows[k].0, rows[k].1);
        }
    }
    Ok(rows.iter().zip(&known).filter(|(_, &k)| k).map(|(r, _)| r.clone()).collect())
}

/// Unit-normal rows with parallel duplicates collapsed to the tightest offset.
fn dedup_rows(poly: &Polytope) -> Vec<(Vec<f64>, f64)> {
    let mut rows: Vec<(Vec<f64>, f64)> = poly.rows().map(|(a, b)| (a.to_vec(), b)).collect();
    rows.sort_by(|x, y| {
        x.0.iter()
            .zip(&y.0)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(x.1.total_cmp(&y.1))
    });
    let mut out: Vec<(Vec<f64>, f64)> = Vec::with_capacity(rows.len());
    for (a, b) in rows {
        if let Some(last) = out.last_mut() {
            // Normals equal up to rounding need not sort by offset, so keep the tightest.
            if last.0.iter().zip(&a).all(|(p, q)| (p - q).abs() <= 1e-12) {
                last.1 = last.1.min(b);
                continue;
            }
        }
        out.push((a, b));
    }
    out
}

/// `inner ⊆ outer`, decided row by row of `outer` with slack [`CONTAINMENT_TOL`].
pub fn contains(outer: &Polytope, inner: &Polytope) -> Result<bool, GeometryError> {
    if outer.dim != inner.dim {
        return Err(GeometryError::DimensionMismatch {
            expected: outer.dim,
            got: inner.dim,
        });
    }
    if is_empty(inner)? {
        return Ok(true);
    }
    let inner_n = inner.normalized();
    for (a, b) in outer.normalized().rows() {
        match solve_max(a, &inner_n)? {
            MaxOutcome::Optimal(p) => {
                if dot(a, &p) > b + CONTAINMENT_TOL {
                    return Ok(false);
                }
            }
            MaxOutcome::Unbounded => return Ok(false),
            MaxOutcome::Infeasible => return Ok(true),
        }
    }
    Ok(true)
}

/// Centre and radius of the largest inscribed ball.
pub fn chebyshev_center(poly: &Polytope) -> Result<(Vec<f64>, f64), GeometryError> {
    let dim = poly.dim;
    let work = poly.normalized();
    let mut lifted = Polytope::universe(dim + 1);
    let mut row = vec![0.0; dim + 1];
    for (a, b) in work.rows() {
        row[..dim].copy_from_slice(a);
        row[dim] = 1.0;
        lifted.push_row(&row, b);
    }
    row.iter_mut().for_each(|v| *v = 0.0);
    row[dim] = -1.0;
    lifted.push_row(&row, 0.0);
    let mut cost = vec![0.0; dim + 1];
    cost[dim] = 1.0;
    let sol = lp_solve(&cost, &lifted, Sense::Max)?;
    match sol.status {
        LpStatus::Optimal => {
            let p = sol.point.expect("optimal carries a point");
            Ok((p[..dim].to_vec(), p[dim].max(0.0)))
        }
        LpStatus::Infeasible => Err(GeometryError::Empty),
        LpStatus::Unbounded => Err(GeometryError::Unbounded),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interval(lo: f64, hi: f64) -> Polytope {
        Polytope::from_box(&[lo], &[hi]).unwrap()
    }

    fn unit_square() -> Polytope {
        Polytope::from_box(&[0.0, 0.0], &[1.0, 1.0]).unwrap()
    }

    #[test]
    fn lp_box_bound() {
        let sol = lp_solve(&[1.0], &interval(0.0, 1.0), Sense::Max).unwrap();
        assert_eq!(sol.status, LpStatus::Optimal);
        assert!((sol.objective - 1.0).abs() < 1e-12);
        assert!((sol.point.unwrap()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lp_contradictory_halfspaces() {
        let p = Polytope::from_rows(1, &[(vec![1.0], -1.0), (vec![-1.0], 0.0)]).unwrap();
        let sol = lp_solve(&[1.0], &p, Sense::Min).unwrap();
        assert_eq!(sol.status, LpStatus::Infeasible);
        assert!(sol.point.is_none());
    }

    #[test]
    fn lp_unit_square_corner() {
        let sol = lp_solve(&[1.0, 1.0], &unit_square(), Sense::Max).unwrap();
        assert!((sol.objective - 2.0).abs() < 1e-12);
        let p = sol.point.unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && (p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lp_unbounded_direction() {
        let half = Polytope::from_rows(2, &[(vec![-1.0, 0.0], 0.0)]).unwrap();
        assert_eq!(lp_solve(&[1.0, 0.0], &half, Sense::Max).unwrap().status, LpStatus::Unbounded);
        assert_eq!(lp_solve(&[-1.0, 0.0], &half, Sense::Max).unwrap().status, LpStatus::Optimal);
    }

    #[test]
    fn lp_rejects_dimension_mismatch() {
        assert!(matches!(
            lp_solve(&[1.0, 2.0], &interval(0.0, 1.0), Sense::Max),
            Err(GeometryError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn emptiness() {
        assert!(!is_empty(&interval(0.0, 1.0)).unwrap());
        let p = Polytope::from_rows(1, &[(vec![1.0], 0.0), (vec![-1.0], -1.0)]).unwrap();
        assert!(is_empty(&p).unwrap());
        assert!(is_empty(&Polytope::empty(3)).unwrap());
        assert!(!is_empty(&Polytope::universe(2)).unwrap());
    }

    #[test]
    fn zero_row_with_negative_offset_is_rejected() {
        assert!(Polytope::from_rows(2, &[(vec![0.0, 0.0], -1.0)]).is_err());
    }

    #[test]
    fn reduce_drops_dominated_row() {
        let p = Polytope::from_rows(1, &[(vec![1.0], 1.0), (vec![1.0], 2.0), (vec![-1.0], 0.0)])
            .unwrap();
        let r = reduce(&p).unwrap();
        assert_eq!(r.num_rows(), 2);
        assert!(r.contains_point(&[1.0], 1e-12));
        assert!(!r.contains_point(&[1.5], 1e-9));
    }

    #[test]
    fn reduce_keeps_tightest_of_nearly_parallel_rows() {
        // The looser copy has the lexicographically smaller normal.
        let p = Polytope::from_rows(
            2,
            &[
                (vec![0.99503719020998926, 0.099503719020998929], 0.0),
                (vec![0.99503719020998915, 0.099503719020998915], 0.5),
                (vec![-1.0, 0.0], 1.0),
                (vec![0.0, 1.0], 1.0),
                (vec![0.0, -1.0], 1.0),
            ],
        )
        .unwrap();
        let r = reduce(&p).unwrap();
        assert!(!r.contains_point(&[0.0, 0.5], 1e-9));
    }

    #[test]
    fn reduce_duplicated_square() {
        let sq = unit_square();
        let doubled = sq.intersect(&sq).unwrap();
        assert_eq!(doubled.num_rows(), 8);
        assert_eq!(reduce(&doubled).unwrap().num_rows(), 4);
    }

    #[test]
    fn reduce_of_empty_is_an_error() {
        assert_eq!(reduce(&Polytope::empty(2)), Err(GeometryError::Empty));
    }

    #[test]
    fn containment() {
        let big = Polytope::from_box(&[-1.0, -1.0], &[2.0, 2.0]).unwrap();
        assert!(contains(&big, &unit_square()).unwrap());
        assert!(!contains(&unit_square(), &big).unwrap());
        assert!(contains(&unit_square(), &unit_square()).unwrap());
    }

    #[test]
    fn chebyshev_examples() {
        let (c, r) = chebyshev_center(&unit_square()).unwrap();
        assert!((c[0] - 0.5).abs() < 1e-9 && (c[1] - 0.5).abs() < 1e-9);
        assert!((r - 0.5).abs() < 1e-12);

        let (c, r) = chebyshev_center(&interval(0.0, 2.0)).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12 && (r - 1.0).abs() < 1e-12);

        let tri = Polytope::from_rows(
            2,
            &[(vec![-1.0, 0.0], 0.0), (vec![0.0, -1.0], 0.0), (vec![1.0, 1.0], 1.0)],
        )
        .unwrap();
        let (_, r) = chebyshev_center(&tri).unwrap();
        assert!((r - (1.0 - 2f64.sqrt() / 2.0)).abs() < 1e-12);
    }

    #[test]
    fn chebyshev_errors() {
        assert_eq!(chebyshev_center(&Polytope::empty(2)), Err(GeometryError::Empty));
        let half = Polytope::from_rows(1, &[(vec![1.0], 0.0)]).unwrap();
        assert_eq!(chebyshev_center(&half), Err(GeometryError::Unbounded));
    }

    #[test]
    fn canonical_is_order_independent() {
        let a = Polytope::from_rows(2, &[(vec![2.0, 0.0], 2.0), (vec![0.0, -1.0], 0.0)]).unwrap();
        let b = Polytope::from_rows(2, &[(vec![0.0, -3.0], 0.0), (vec![1.0, 0.0], 1.0)]).unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }
}
