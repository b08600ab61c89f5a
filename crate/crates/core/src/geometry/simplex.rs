//! Dense revised simplex for standard-form programs
//! `min c'y  s.t.  A y = b,  y >= 0` with few equality rows.
//!
//! Polytope LPs are posed on their dual, where the number of equality rows is
//! the ambient dimension (at most ~10) and every half-space is a column. The
//! basis inverse therefore stays tiny, and the simplex multipliers of the dual
//! are exactly the primal point we want.

use super::GeometryError;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const PHASE1_TOL: f64 = 1e-9;
const REFACTOR_EVERY: usize = 64;
/// Consecutive degenerate pivots before pricing switches to Bland's rule.
const DEGENERATE_SWITCH: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum StandardStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

#[derive(Debug, Clone)]
pub(crate) struct StandardSolution {
    pub status: StandardStatus,
    /// Simplex multipliers of the equality rows (valid when optimal).
    pub multipliers: Vec<f64>,
}

/// Column-major view of the equality matrix: column `j` is `cols[j*rows..(j+1)*rows]`.
pub(crate) struct StandardForm<'a> {
    pub rows: usize,
    pub cols: &'a [f64],
    pub rhs: &'a [f64],
    pub cost: &'a [f64],
    pub max_iterations: usize,
}

struct Revised<'a> {
    m: usize,
    n: usize,
    cols: &'a [f64],
    signs: Vec<f64>,
    rhs: Vec<f64>,
    /// Basic variable per row; indices >= n are artificials (artificial `n + r` is row `r`).
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    iterations: usize,
    since_refactor: usize,
}

impl<'a> Revised<'a> {
    fn new(form: &StandardForm<'a>) -> Self {
        let m = form.rows;
        let n = form.cost.len();
        let signs: Vec<f64> = form.rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
        let rhs: Vec<f64> = form.rhs.iter().zip(&signs).map(|(b, s)| b * s).collect();
        let mut binv = vec![0.0; m * m];
        for r in 0..m {
            binv[r * m + r] = 1.0;
        }
        let mut in_basis = vec![false; n + m];
        for r in 0..m {
            in_basis[n + r] = true;
        }
        Self {
            m,
            n,
            cols: form.cols,
            xb: rhs.clone(),
            rhs,
            signs,
            basis: (n..n + m).collect(),
            in_basis,
            binv,
            iterations: 0,
            since_refactor: 0,
        }
    }

    /// Entry `r` of the sign-flipped column `j` (artificial columns are unit vectors).
    #[inline]
    fn col_entry(&self, j: usize, r: usize) -> f64 {
        if j < self.n {
            self.signs[r] * self.cols[j * self.m + r]
        } else if j - self.n == r {
            1.0
        } else {
            0.0
        }
    }

    fn ftran(&self, j: usize, out: &mut [f64]) {
        let m = self.m;
        if j >= self.n {
            let r = j - self.n;
            for i in 0..m {
                out[i] = self.binv[i * m + r];
            }
            return;
        }
        let col = &self.cols[j * m..(j + 1) * m];
        for i in 0..m {
            let row = &self.binv[i * m..(i + 1) * m];
            let mut acc = 0.0;
            for k in 0..m {
                acc += row[k] * self.signs[k] * col[k];
            }
            out[i] = acc;
        }
    }

    fn multipliers(&self, cost: &dyn Fn(usize) -> f64, out: &mut [f64]) {
        let m = self.m;
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..m {
            let cb = cost(self.basis[i]);
            if cb != 0.0 {
                let row = &self.binv[i * m..(i + 1) * m];
                for k in 0..m {
                    out[k] += cb * row[k];
                }
            }
        }
    }

    fn reduced_cost(&self, j: usize, cj: f64, pi: &[f64]) -> f64 {
        if j < self.n {
            let col = &self.cols[j * self.m..(j + 1) * self.m];
            let mut d = cj;
            for k in 0..self.m {
                d -= pi[k] * self.signs[k] * col[k];
            }
            d
        } else {
            cj - pi[j - self.n]
        }
    }

    fn pivot(&mut self, r: usize, entering: usize, alpha: &[f64]) {
        let m = self.m;
        let piv = alpha[r];
        let theta = self.xb[r] / piv;
        for i in 0..m {
            if i != r {
                self.xb[i] -= theta * alpha[i];
            }
        }
        self.xb[r] = theta;
        for k in 0..m {
            self.binv[r * m + k] /= piv;
        }
        for i in 0..m {
            if i != r && alpha[i] != 0.0 {
                let f = alpha[i];
                for k in 0..m {
                    self.binv[i * m + k] -= f * self.binv[r * m + k];
                }
            }
        }
        self.in_basis[self.basis[r]] = false;
        self.in_basis[entering] = true;
        self.basis[r] = entering;
        self.since_refactor += 1;
        if self.since_refactor >= REFACTOR_EVERY {
            self.refactor();
        }
    }

    /// Recompute the basis inverse from scratch by Gauss-Jordan with partial pivoting.
    fn refactor(&mut self) {
        let m = self.m;
        let mut bmat = vec![0.0; m * m];
        for (c, &j) in self.basis.iter().enumerate() {
            for r in 0..m {
                bmat[r * m + c] = self.col_entry(j, r);
            }
        }
        let mut inv = vec![0.0; m * m];
        for r in 0..m {
            inv[r * m + r] = 1.0;
        }
        for c in 0..m {
            let (p, best) = (c..m)
                .map(|r| (r, bmat[r * m + c].abs()))
                .fold((c, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            if best < 1e-14 {
                // Keep the product-form inverse; a singular refactor means drift we cannot fix here.
                return;
            }
            if p != c {
                for k in 0..m {
                    bmat.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = bmat[c * m + c];
            for k in 0..m {
                bmat[c * m + k] /= d;
                inv[c * m + k] /= d;
            }
            for r in 0..m {
                if r != c {
                    let f = bmat[r * m + c];
                    if f != 0.0 {
                        for k in 0..m {
                            bmat[r * m + k] -= f * bmat[c * m + k];
                            inv[r * m + k] -= f * inv[c * m + k];
                        }
                    }
                }
            }
        }
        self.binv = inv;
        for i in 0..m {
            self.xb[i] = (0..m).map(|k| self.binv[i * m + k] * self.rhs[k]).sum();
        }
        self.since_refactor = 0;
    }

    /// Runs simplex iterations for the given cost; `allow(j)` filters entering candidates.
    fn optimize(
        &mut self,
        cost: &dyn Fn(usize) -> f64,
        allow: &dyn Fn(usize) -> bool,
        max_iterations: usize,
    ) -> Result<bool, GeometryError> {
        let m = self.m;
        let mut pi = vec![0.0; m];
        let mut alpha = vec![0.0; m];
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= max_iterations {
                return Err(GeometryError::NumericalFailure(format!(
                    "simplex exceeded {max_iterations} iterations"
                )));
            }
            self.iterations += 1;
            self.multipliers(cost, &mut pi);
            let bland = degenerate_run >= DEGENERATE_SWITCH;
            let mut entering = None;
            let mut best = -COST_TOL;
            for j in 0..self.n + m {
                if self.in_basis[j] || !allow(j) {
                    continue;
                }
                let d = self.reduced_cost(j, cost(j), &pi);
                if bland {
                    if d < -COST_TOL {
                        entering = Some(j);
                        break;
                    }
                } else if d < best {
                    best = d;
                    entering = Some(j);
                }
            }
            let Some(q) = entering else {
                return Ok(true);
            };
            self.ftran(q, &mut alpha);
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..m {
                if alpha[i] > PIVOT_TOL {
                    let t = self.xb[i].max(0.0) / alpha[i];
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            t < ratio - 1e-12
                                || (t <= ratio + 1e-12 && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        ratio = t;
                        leave = Some(i);
                    }
                }
            }
            let Some(r) = leave else {
                return Ok(false);
            };
            if ratio <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, q, &alpha);
        }
    }
}

pub(crate) fn solve_standard(form: &StandardForm<'_>) -> Result<StandardSolution, GeometryError> {
    let m = form.rows;
    let n = form.cost.len();
    debug_assert_eq!(form.cols.len(), m * n);
    debug_assert_eq!(form.rhs.len(), m);
    let mut lp = Revised::new(form);

    // Phase 1: drive artificials to zero.
    let phase1_cost = |j: usize| if j >= n { 1.0 } else { 0.0 };
    let all = |_: usize| true;
    lp.optimize(&phase1_cost, &all, form.max_iterations)?;
    let infeas: f64 = lp
        .basis
        .iter()
        .zip(&lp.xb)
        .filter(|(&j, _)| j >= n)
        .map(|(_, &v)| v)
        .sum();
    let scale = 1.0 + lp.rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if infeas > PHASE1_TOL * scale {
        return Ok(StandardSolution {
            status: StandardStatus::Infeasible,
            multipliers: vec![0.0; m],
        });
    }

    // Pivot zero-level artificials out of the basis where possible.
    let mut alpha = vec![0.0; m];
    for r in 0..m {
        if lp.basis[r] < n {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for j in 0..n {
            if lp.in_basis[j] {
                continue;
            }
            let mut v = 0.0;
            for k in 0..m {
                v += lp.binv[r * m + k] * lp.signs[k] * lp.cols[j * m + k];
            }
            if v.abs() > 1e-9 && best.is_none_or(|(_, b)| v.abs() > b) {
                best = Some((j, v.abs()));
            }
        }
        if let Some((j, _)) = best {
            lp.ftran(j, &mut alpha);
            lp.pivot(r, j, &alpha);
        }
    }

    // Phase 2: original costs, artificials never re-enter.
    let phase2_cost = |j: usize| if j < n { form.cost[j] } else { 0.0 };
    let real = |j: usize| j < n;
    let bounded = lp.optimize(&phase2_cost, &real, form.max_iterations)?;
    if !bounded {
        return Ok(StandardSolution {
            status: StandardStatus::Unbounded,
            multipliers: vec![0.0; m],
        });
    }
    let mut pi = vec![0.0; m];
    lp.multipliers(&phase2_cost, &mut pi);
    let multipliers: Vec<f64> = pi.iter().zip(&lp.signs).map(|(p, s)| p * s).collect();
    Ok(StandardSolution {
        status: StandardStatus::Optimal,
        multipliers,
    })
}
