//! Exact QP backend. Equality rows and fixed variables are eliminated by
//! Gauss-Jordan; the remaining inequality-constrained problem is solved with
//! the Goldfarb-Idnani dual active-set method, which starts from the
//! unconstrained minimizer and adds violated constraints one at a time.

use nalgebra::{Cholesky, DMatrix, DVector};

use super::qp::{QpData, QpSettings, QpSolution, QpStatus};

const PIVOT_TOL: f64 = 1e-12;
const EQ_TOL: f64 = 1e-9;
const FEAS_TOL: f64 = 1e-11;
/// `zn` is a sum of squares, so its rounding floor scales with eps² times `‖J'n‖²`.
const DEP_TOL: f64 = 1e-24;

#[derive(Debug, Clone, Copy)]
pub struct ActiveSetSolver {
    settings: QpSettings,
}

/// `z = offset + Σ_j map[z][j].1 * w[map[z][j].0]`.
struct Reduction {
    n: usize,
    d: usize,
    offset: Vec<f64>,
    map: Vec<Vec<(usize, f64)>>,
}

/// A two-sided inequality over the reduced variables.
struct Row {
    coef: Vec<(usize, f64)>,
    lo: f64,
    hi: f64,
    norm: f64,
    /// Magnitude of the row before eliminated terms were folded into its
    /// bounds. Cancellation error scales with this, not with the reduced bounds.
    scale: f64,
    /// `(is_variable_bound, original index)`.
    origin: (bool, usize),
}

enum Reduced {
    Ok(Reduction),
    Infeasible,
}

impl ActiveSetSolver {
    pub fn new(settings: QpSettings) -> Self {
        Self { settings }
    }

    pub fn solve(&self, data: &QpData<'_>) -> QpSolution {
        let n = data.linear.len();
        let m = data.constraints.nrows;
        let red = match reduce(data) {
            Reduced::Ok(r) => r,
            Reduced::Infeasible => return QpSolution::failed(QpStatus::Infeasible, n, m, 0),
        };
        let rows = match reduced_rows(data, &red) {
            Some(r) => r,
            None => return QpSolution::failed(QpStatus::Infeasible, n, m, 0),
        };
        let (h, g) = reduced_objective(data, &red);
        let outcome = goldfarb_idnani(h, &g, &rows, self.settings.regularization, self.settings.max_iterations);
        let (status, w, active, iterations) = match outcome {
            Gi::Optimal { x, active, iterations } => (QpStatus::Optimal, x, active, iterations),
            Gi::Infeasible { iterations } => return QpSolution::failed(QpStatus::Infeasible, n, m, iterations),
            Gi::Failed { iterations } => return QpSolution::failed(QpStatus::NumericalFailure, n, m, iterations),
        };
        let x: Vec<f64> = (0..n)
            .map(|k| red.offset[k] + red.map[k].iter().map(|&(j, v)| v * w[j]).sum::<f64>())
            .collect();
        let mut y = vec![0.0; m];
        let mut y_bounds = vec![0.0; n];
        for (r, upper, mult) in active {
            let v = if upper { mult } else { -mult };
            let (is_bound, idx) = rows[r].origin;
            if is_bound {
                y_bounds[idx] += v;
            } else {
                y[idx] += v;
            }
        }
        let objective = objective(data, &x);
        let primal_residual = primal_violation(data, &x);
        QpSolution {
            status,
            x,
            y,
            y_bounds,
            objective,
            iterations,
            polished: false,
            primal_residual,
            dual_residual: 0.0,
            internal: None,
        }
    }
}

pub(crate) fn objective(data: &QpData<'_>, x: &[f64]) -> f64 {
    let px = data.hessian.mul_vec(x);
    0.5 * px.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + data.linear.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

fn primal_violation(data: &QpData<'_>, x: &[f64]) -> f64 {
    let ax = data.constraints.mul_vec(x);
    let rows = ax.iter().zip(data.lower.iter().zip(data.upper)).map(|(v, (l, u))| (l - v).max(v - u).max(0.0));
    let vars = x.iter().zip(data.var_lower.iter().zip(data.var_upper)).map(|(v, (l, u))| (l - v).max(v - u).max(0.0));
    rows.chain(vars).fold(0.0, f64::max)
}

fn is_eq(l: f64, u: f64) -> bool {
    l.is_finite() && u.is_finite() && (u - l).abs() <= 1e-12 * (1.0 + l.abs())
}

fn reduce(data: &QpData<'_>) -> Reduced {
    let n = data.linear.len();
    let fixed: Vec<Option<f64>> = (0..n)
        .map(|j| is_eq(data.var_lower[j], data.var_upper[j]).then_some(data.var_lower[j]))
        .collect();
    let eq_rows: Vec<usize> = (0..data.constraints.nrows).filter(|&r| is_eq(data.lower[r], data.upper[r])).collect();
    let mut row_pos = vec![usize::MAX; data.constraints.nrows];
    for (k, &r) in eq_rows.iter().enumerate() {
        row_pos[r] = k;
    }
    let k = eq_rows.len();
    let mut mat = vec![vec![0.0; n]; k];
    let mut rhs: Vec<f64> = eq_rows.iter().map(|&r| data.lower[r]).collect();
    for (r, c, v) in data.constraints.triplets() {
        if row_pos[r] != usize::MAX {
            mat[row_pos[r]][c] = v;
        }
    }
    for (i, row) in mat.iter_mut().enumerate() {
        for (c, val) in row.iter_mut().enumerate() {
            if let Some(f) = fixed[c] {
                rhs[i] -= *val * f;
                *val = 0.0;
            }
        }
    }
    let scale: Vec<f64> = mat.iter().zip(&rhs).map(|(r, b)| r.iter().fold(b.abs(), |a, v| a.max(v.abs())).max(1.0)).collect();
    let unbounded: Vec<bool> = (0..n).map(|j| data.var_lower[j] == f64::NEG_INFINITY && data.var_upper[j] == f64::INFINITY).collect();
    let mut pivot_of_row: Vec<Option<usize>> = vec![None; k];
    let mut is_pivot = vec![false; n];
    for i in 0..k {
        let mut best: Option<(f64, usize)> = None;
        for c in 0..n {
            if fixed[c].is_some() || is_pivot[c] {
                continue;
            }
            let a = mat[i][c].abs();
            if a <= PIVOT_TOL * scale[i] {
                continue;
            }
            // Prefer eliminating unbounded variables so bounds stay simple.
            let score = if unbounded[c] { a } else { a * 1e-3 };
            if best.is_none_or(|(s, _)| score > s) {
                best = Some((score, c));
            }
        }
        let Some((_, c)) = best else {
            if rhs[i].abs() > EQ_TOL * scale[i] {
                return Reduced::Infeasible;
            }
            continue;
        };
        let piv = mat[i][c];
        for v in mat[i].iter_mut() {
            *v /= piv;
        }
        rhs[i] /= piv;
        for other in 0..k {
            if other == i {
                continue;
            }
            let f = mat[other][c];
            if f != 0.0 {
                for cc in 0..n {
                    mat[other][cc] -= f * mat[i][cc];
                }
                mat[other][c] = 0.0;
                rhs[other] -= f * rhs[i];
            }
        }
        pivot_of_row[i] = Some(c);
        is_pivot[c] = true;
    }
    let mut w_index = vec![usize::MAX; n];
    let mut d = 0;
    for j in 0..n {
        if fixed[j].is_none() && !is_pivot[j] {
            w_index[j] = d;
            d += 1;
        }
    }
    let mut offset = vec![0.0; n];
    let mut map: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for j in 0..n {
        if let Some(f) = fixed[j] {
            offset[j] = f;
        } else if w_index[j] != usize::MAX {
            map[j].push((w_index[j], 1.0));
        }
    }
    for (i, piv) in pivot_of_row.iter().enumerate() {
        let Some(b) = *piv else { continue };
        offset[b] = rhs[i];
        for c in 0..n {
            if c != b && w_index[c] != usize::MAX && mat[i][c] != 0.0 {
                map[b].push((w_index[c], -mat[i][c]));
            }
        }
    }
    Reduced::Ok(Reduction { n, d, offset, map })
}

/// Inequality rows in reduced variables, or `None` if some row became a
/// violated constant.
fn reduced_rows(data: &QpData<'_>, red: &Reduction) -> Option<Vec<Row>> {
    let mut rows = Vec::new();
    let mut acc = vec![0.0; red.d];
    let mut touched: Vec<usize> = Vec::new();
    let mut mark = vec![false; red.d];
    let mut csr: Vec<Vec<(usize, f64)>> = vec![Vec::new(); data.constraints.nrows];
    for (r, c, v) in data.constraints.triplets() {
        csr[r].push((c, v));
    }
    let mut push = |entries: &[(usize, f64)], lo: f64, hi: f64, origin: (bool, usize), rows: &mut Vec<Row>| -> bool {
        if lo == f64::NEG_INFINITY && hi == f64::INFINITY {
            return true;
        }
        let mut constant = 0.0;
        let mut magnitude = 0.0;
        for &(c, v) in entries {
            constant += v * red.offset[c];
            magnitude += (v * red.offset[c]).abs();
            for &(j, m) in &red.map[c] {
                if !mark[j] {
                    mark[j] = true;
                    touched.push(j);
                }
                acc[j] += v * m;
            }
        }
        touched.sort_unstable();
        let coef: Vec<(usize, f64)> = touched.iter().map(|&j| (j, acc[j])).filter(|&(_, v)| v != 0.0).collect();
        for &j in &touched {
            acc[j] = 0.0;
            mark[j] = false;
        }
        touched.clear();
        let (lo, hi) = (lo - constant, hi - constant);
        let norm = coef.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
        let scale = 1.0 + lo.abs().min(hi.abs()).min(1e12) + magnitude;
        if norm <= PIVOT_TOL * scale {
            return lo <= EQ_TOL * scale && hi >= -EQ_TOL * scale;
        }
        rows.push(Row { coef, lo, hi, norm, scale, origin });
        true
    };
    for (r, entries) in csr.iter().enumerate() {
        if is_eq(data.lower[r], data.upper[r]) {
            continue;
        }
        if !push(entries, data.lower[r], data.upper[r], (false, r), &mut rows) {
            return None;
        }
    }
    for j in 0..red.n {
        if is_eq(data.var_lower[j], data.var_upper[j]) {
            continue;
        }
        if !push(&[(j, 1.0)], data.var_lower[j], data.var_upper[j], (true, j), &mut rows) {
            return None;
        }
    }
    Some(rows)
}

fn reduced_objective(data: &QpData<'_>, red: &Reduction) -> (DMatrix<f64>, Vec<f64>) {
    let (n, d) = (red.n, red.d);
    let mut q = DMatrix::<f64>::zeros(n, n);
    for (r, c, v) in data.hessian.triplets() {
        q[(r, c)] = v;
    }
    for i in 0..n {
        for j in 0..i {
            let v = if q[(i, j)] != 0.0 { q[(i, j)] } else { q[(j, i)] };
            q[(i, j)] = v;
            q[(j, i)] = v;
        }
    }
    // QN, then N'QN and N'(Q offset + q).
    let mut qn = DMatrix::<f64>::zeros(n, d);
    for k in 0..n {
        for &(j, v) in &red.map[k] {
            for i in 0..n {
                qn[(i, j)] += q[(i, k)] * v;
            }
        }
    }
    let mut h = DMatrix::<f64>::zeros(d, d);
    let mut g = vec![0.0; d];
    let q_off: Vec<f64> = (0..n).map(|i| (0..n).map(|k| q[(i, k)] * red.offset[k]).sum::<f64>() + data.linear[i]).collect();
    for k in 0..n {
        for &(j, v) in &red.map[k] {
            for jj in 0..d {
                h[(j, jj)] += v * qn[(k, jj)];
            }
            g[j] += v * q_off[k];
        }
    }
    (h, g)
}

enum Gi {
    Optimal {
        x: Vec<f64>,
        /// `(row, upper side, multiplier)`.
        active: Vec<(usize, bool, f64)>,
        iterations: usize,
    },
    Infeasible {
        iterations: usize,
    },
    Failed {
        iterations: usize,
    },
}

fn givens(a: f64, b: f64) -> (f64, f64, f64) {
    if b == 0.0 {
        return (1.0, 0.0, a);
    }
    let h = a.hypot(b);
    (a / h, b / h, h)
}

fn goldfarb_idnani(mut h: DMatrix<f64>, g: &[f64], rows: &[Row], reg: f64, max_iterations: usize) -> Gi {
    let d = g.len();
    let max_diag = (0..d).fold(1.0f64, |a, i| a.max(h[(i, i)].abs()));
    for i in 0..d {
        if h[(i, i)].abs() <= 1e-12 * max_diag {
            h[(i, i)] += reg * max_diag;
        }
    }
    let chol = match Cholesky::new(h.clone()) {
        Some(c) => c,
        None => {
            for i in 0..d {
                h[(i, i)] += reg * max_diag;
            }
            match Cholesky::new(h) {
                Some(c) => c,
                None => return Gi::Failed { iterations: 0 },
            }
        }
    };
    let mut x = -chol.solve(&DVector::from_column_slice(g));
    if d == 0 {
        return match rows.iter().all(|r| r.lo <= 0.0 && r.hi >= 0.0) {
            true => Gi::Optimal {
                x: Vec::new(),
                active: Vec::new(),
                iterations: 0,
            },
            false => Gi::Infeasible { iterations: 0 },
        };
    }
    // J = L^{-T}.
    let l = chol.l();
    let linv = l.solve_lower_triangular(&DMatrix::identity(d, d)).expect("cholesky factor is nonsingular");
    let mut jm = linv.transpose();
    let mut rm = DMatrix::<f64>::zeros(d, d);
    let mut active: Vec<(usize, bool)> = Vec::new();
    let mut mult: Vec<f64> = Vec::new();
    let mut iterations = 0;
    // Sides whose violation was shown to be rounding: the allowance (in row
    // units) they may be violated by. Re-examined before returning.
    let mut tolerated: Vec<Option<f64>> = vec![None; 2 * rows.len()];

    let eval = |r: &Row, x: &DVector<f64>| r.coef.iter().map(|&(j, v)| v * x[j]).sum::<f64>();

    loop {
        // Most violated constraint, normalized.
        let mut pick: Option<(f64, usize, bool)> = None;
        for (i, r) in rows.iter().enumerate() {
            let ax = eval(r, &x);
            let tol = FEAS_TOL * r.scale / r.norm;
            for (upper, viol) in [(false, (r.lo - ax) / r.norm), (true, (ax - r.hi) / r.norm)] {
                let side = 2 * i + upper as usize;
                if let Some(allow) = tolerated[side] {
                    if viol * r.norm <= allow {
                        continue;
                    }
                    tolerated[side] = None;
                }
                if viol > tol && pick.is_none_or(|(v, _, _)| viol > v) && !active.contains(&(i, upper)) {
                    pick = Some((viol, i, upper));
                }
            }
        }
        let Some((_, p, p_upper)) = pick else {
            let act = active.iter().zip(&mult).map(|(&(r, up), &u)| (r, up, u)).collect();
            return Gi::Optimal {
                x: x.as_slice().to_vec(),
                active: act,
                iterations,
            };
        };
        let sign = if p_upper { -1.0 } else { 1.0 };
        let bound = if p_upper { -rows[p].hi } else { rows[p].lo };
        let mut np = DVector::<f64>::zeros(d);
        for &(j, v) in &rows[p].coef {
            np[j] = sign * v;
        }
        let mut u_plus = 0.0;
        loop {
            iterations += 1;
            if iterations > max_iterations {
                return Gi::Failed { iterations };
            }
            let q = active.len();
            let dvec = jm.tr_mul(&np);
            let mut z = DVector::<f64>::zeros(d);
            for j in q..d {
                z.axpy(dvec[j], &jm.column(j), 1.0);
            }
            let mut r = vec![0.0; q];
            for i in (0..q).rev() {
                let mut s = dvec[i];
                for k in i + 1..q {
                    s -= rm[(i, k)] * r[k];
                }
                r[i] = s / rm[(i, i)];
            }
            let dnorm2 = dvec.norm_squared();
            let zn: f64 = (q..d).map(|j| dvec[j] * dvec[j]).sum();
            let slack = np.dot(&x) - bound;
            let t2 = if zn > DEP_TOL * dnorm2 { -slack / zn } else { f64::INFINITY };
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for (k, &rk) in r.iter().enumerate() {
                if rk > 1e-14 * (1.0 + rk.abs()) {
                    let ratio = mult[k] / rk;
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(k);
                    }
                }
            }
            let t = t1.min(t2);
            if !t.is_finite() {
                // p is a non-positive combination of active constraints. If its
                // violation is within the rounding those constraints carry, it
                // is not evidence of infeasibility.
                let allowance = FEAS_TOL
                    * (rows[p].scale + r.iter().zip(&active).map(|(rk, &(a, _))| rk.abs() * rows[a].scale).sum::<f64>());
                if -slack <= allowance && u_plus == 0.0 {
                    tolerated[2 * p + p_upper as usize] = Some(allowance);
                    break;
                }
                return Gi::Infeasible { iterations };
            }
            for (k, rk) in r.iter().enumerate() {
                mult[k] -= t * rk;
            }
            u_plus += t;
            if t2.is_finite() {
                x.axpy(t, &z, 1.0);
            }
            if t2 <= t1 {
                // Full step: add p.
                let mut dv = dvec.clone();
                for j in (q + 1..d).rev() {
                    let (c, s, hh) = givens(dv[j - 1], dv[j]);
                    dv[j - 1] = hh;
                    dv[j] = 0.0;
                    for row in 0..d {
                        let a = jm[(row, j - 1)];
                        let b = jm[(row, j)];
                        jm[(row, j - 1)] = c * a + s * b;
                        jm[(row, j)] = -s * a + c * b;
                    }
                }
                for i in 0..=q {
                    rm[(i, q)] = dv[i];
                }
                active.push((p, p_upper));
                mult.push(u_plus);
                break;
            }
            // Partial step: drop the blocking constraint and retry p.
            let k = drop.expect("finite t1 has an index");
            active.remove(k);
            mult.remove(k);
            for c in k..q - 1 {
                for i in 0..=c + 1 {
                    rm[(i, c)] = rm[(i, c + 1)];
                }
            }
            for i in 0..d {
                rm[(i, q - 1)] = 0.0;
            }
            for c in k..q - 1 {
                let (cs, sn, hh) = givens(rm[(c, c)], rm[(c + 1, c)]);
                rm[(c, c)] = hh;
                rm[(c + 1, c)] = 0.0;
                for cc in c + 1..q - 1 {
                    let a = rm[(c, cc)];
                    let b = rm[(c + 1, cc)];
                    rm[(c, cc)] = cs * a + sn * b;
                    rm[(c + 1, cc)] = -sn * a + cs * b;
                }
                for row in 0..d {
                    let a = jm[(row, c)];
                    let b = jm[(row, c + 1)];
                    jm[(row, c)] = cs * a + sn * b;
                    jm[(row, c + 1)] = -sn * a + cs * b;
                }
            }
        }
    }
}
