//! Operator-splitting QP solver for `min ½x'Px + q'x  s.t.  l <= Ax <= u`.
//!
//! Variable bounds are handled as extra identity rows appended to `A`. The
//! reduced KKT matrix `P + σI + A'diag(ρ)A` is small and dense here, so it is
//! factored with a dense Cholesky and reused until ρ changes.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::qp::{QpSettings, QpSolution, QpStatus, WarmStart};
use crate::encode::CscMatrix;

const RHO_EQ_SCALE: f64 = 1e3;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const INFTY: f64 = 1e20;
const POLISH_DELTA: f64 = 1e-9;
const POLISH_REFINE: usize = 4;
/// Fewest iterations before an infeasibility certificate is trusted.
const PINF_FLOOR: usize = 40;
const FACTOR_CACHE: usize = 6;

/// Reusable solver for a fixed `(P, A)` pair and a fixed set of bounded variables.
#[derive(Debug, Clone)]
pub struct AdmmSolver {
    settings: QpSettings,
    n: usize,
    m_con: usize,
    bounded: Vec<usize>,
    /// Scaled dense Hessian.
    p: DMatrix<f64>,
    /// Scaled augmented constraint matrix, row-major triplets per row.
    rows: Vec<Vec<(usize, f64)>>,
    /// The same matrix column-wise.
    cols: Vec<Vec<(usize, f64)>>,
    d: Vec<f64>,
    e: Vec<f64>,
    c: f64,
    rho: f64,
    /// Most recently used first.
    factors: Vec<(f64, Vec<bool>, Cholesky<f64, Dyn>)>,
    /// Unscaled original Hessian and constraints for polishing.
    p_orig: DMatrix<f64>,
    rows_orig: Vec<Vec<(usize, f64)>>,
}

impl AdmmSolver {
    pub fn new(hessian: &CscMatrix, constraints: &CscMatrix, bounded: &[usize], settings: QpSettings) -> Self {
        let n = hessian.ncols;
        assert_eq!(constraints.ncols, n, "constraint/hessian size mismatch");
        let m_con = constraints.nrows;
        let mut p = DMatrix::<f64>::zeros(n, n);
        for (r, c, v) in hessian.triplets() {
            p[(r, c)] = v;
        }
        // Symmetrize in case only one triangle was given.
        for i in 0..n {
            for j in 0..i {
                let v = if p[(i, j)] != 0.0 { p[(i, j)] } else { p[(j, i)] };
                p[(i, j)] = v;
                p[(j, i)] = v;
            }
        }
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m_con + bounded.len()];
        for (r, c, v) in constraints.triplets() {
            rows[r].push((c, v));
        }
        for (k, &j) in bounded.iter().enumerate() {
            rows[m_con + k].push((j, 1.0));
        }
        for r in &mut rows {
            r.sort_by_key(|e| e.0);
        }
        let p_orig = p.clone();
        let rows_orig = rows.clone();
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; rows.len()];
        let mut c = 1.0;
        ruiz(&mut p, &mut rows, &mut d, &mut e, &mut c, settings.scaling_iterations);
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (r, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                cols[j].push((r, v));
            }
        }
        Self {
            settings,
            n,
            m_con,
            bounded: bounded.to_vec(),
            p,
            rows,
            cols,
            d,
            e,
            c,
            rho: settings.rho,
            factors: Vec::new(),
            p_orig,
            rows_orig,
        }
    }

    pub fn settings(&self) -> &QpSettings {
        &self.settings
    }

    pub fn settings_mut(&mut self) -> &mut QpSettings {
        &mut self.settings
    }

    pub fn num_vars(&self) -> usize {
        self.n
    }

    fn rho_vector(&self, eq: &[bool], free: &[bool]) -> Vec<f64> {
        eq.iter()
            .zip(free)
            .map(|(&is_eq, &is_free)| {
                if is_free {
                    RHO_MIN
                } else if is_eq {
                    (RHO_EQ_SCALE * self.rho).min(RHO_MAX)
                } else {
                    self.rho
                }
            })
            .collect()
    }

    fn factorize(&mut self, eq: &[bool], free: &[bool]) {
        let key: Vec<bool> = eq.iter().zip(free).flat_map(|(&a, &b)| [a, b]).collect();
        if let Some(pos) = self.factors.iter().position(|(rho, k, _)| *rho == self.rho && *k == key) {
            let hit = self.factors.remove(pos);
            self.factors.insert(0, hit);
            return;
        }
        let rho_vec = self.rho_vector(eq, free);
        let mut k = self.p.clone();
        for i in 0..self.n {
            k[(i, i)] += self.settings.sigma;
        }
        for (r, row) in self.rows.iter().enumerate() {
            let w = rho_vec[r];
            for &(a, va) in row {
                for &(b, vb) in row {
                    k[(a, b)] += w * va * vb;
                }
            }
        }
        let chol = Cholesky::new(k).expect("reduced KKT matrix is positive definite by construction");
        self.factors.insert(0, (self.rho, key, chol));
        self.factors.truncate(FACTOR_CACHE);
    }

    fn a_mul(&self, x: &[f64], out: &mut [f64]) {
        for (r, row) in self.rows.iter().enumerate() {
            out[r] = row.iter().map(|&(j, v)| v * x[j]).sum();
        }
    }

    fn at_mul(&self, y: &[f64], out: &mut [f64]) {
        for (j, col) in self.cols.iter().enumerate() {
            out[j] = col.iter().map(|&(r, v)| v * y[r]).sum();
        }
    }

    fn p_mul(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            out[i] = (0..self.n).map(|j| self.p[(i, j)] * x[j]).sum();
        }
    }

    /// Solves with the given linear term and bounds.
    pub fn solve(
        &mut self,
        q: &[f64],
        lower: &[f64],
        upper: &[f64],
        var_lower: &[f64],
        var_upper: &[f64],
        warm: Option<&WarmStart>,
    ) -> QpSolution {
        let n = self.n;
        let m = self.rows.len();
        assert_eq!(q.len(), n);
        assert_eq!(lower.len(), self.m_con);
        // Full unscaled bounds.
        let mut l_full: Vec<f64> = lower.to_vec();
        let mut u_full: Vec<f64> = upper.to_vec();
        for &j in &self.bounded {
            l_full.push(var_lower[j]);
            u_full.push(var_upper[j]);
        }
        let clamp = |v: f64| v.clamp(-INFTY, INFTY);
        let ls: Vec<f64> = (0..m).map(|i| clamp(l_full[i]) * self.e[i]).collect();
        let us: Vec<f64> = (0..m).map(|i| clamp(u_full[i]) * self.e[i]).collect();
        let qs: Vec<f64> = (0..n).map(|j| self.c * self.d[j] * q[j]).collect();
        let eq: Vec<bool> = (0..m).map(|i| (u_full[i] - l_full[i]).abs() < 1e-12 * (1.0 + l_full[i].abs())).collect();
        let free: Vec<bool> = (0..m).map(|i| l_full[i] <= -INFTY && u_full[i] >= INFTY).collect();

        let (mut x, mut z, mut y) = match warm {
            Some(WarmStart {
                x: wx,
                internal: Some((wz, wy)),
            }) if wx.len() == n && wz.len() == m && wy.len() == m => (
                (0..n).map(|j| wx[j] / self.d[j]).collect::<Vec<_>>(),
                (0..m).map(|i| wz[i] * self.e[i]).collect::<Vec<_>>(),
                (0..m).map(|i| wy[i] * self.c / self.e[i]).collect::<Vec<_>>(),
            ),
            Some(w) if w.x.len() == n => ((0..n).map(|j| w.x[j] / self.d[j]).collect(), vec![0.0; m], vec![0.0; m]),
            _ => (vec![0.0; n], vec![0.0; m], vec![0.0; m]),
        };
        let s = self.settings;
        self.rho = s.rho;
        let mut rho_vec;
        self.factorize(&eq, &free);
        rho_vec = self.rho_vector(&eq, &free);

        let mut ax = vec![0.0; m];
        let mut aty = vec![0.0; n];
        let mut px = vec![0.0; n];
        let mut rhs = vec![0.0; m];
        let mut tmp_n = vec![0.0; n];
        let mut xt = vec![0.0; n];
        let mut zt = vec![0.0; m];
        let mut y_prev = y.clone();
        let mut iterations = 0;
        let mut status = QpStatus::NumericalFailure;
        let mut prim_res = f64::INFINITY;
        let mut dual_res = f64::INFINITY;

        for it in 1..=s.max_iterations {
            iterations = it;
            y_prev.copy_from_slice(&y);
            for i in 0..m {
                rhs[i] = rho_vec[i] * z[i] - y[i];
            }
            self.at_mul(&rhs, &mut tmp_n);
            for j in 0..n {
                tmp_n[j] += s.sigma * x[j] - qs[j];
            }
            let chol = &self.factors[0].2;
            let sol = chol.solve(&DVector::from_column_slice(&tmp_n));
            xt.copy_from_slice(sol.as_slice());
            self.a_mul(&xt, &mut zt);
            for j in 0..n {
                x[j] = s.alpha * xt[j] + (1.0 - s.alpha) * x[j];
            }
            for i in 0..m {
                let zr = s.alpha * zt[i] + (1.0 - s.alpha) * z[i];
                let zn = (zr + y[i] / rho_vec[i]).clamp(ls[i], us[i]);
                y[i] += rho_vec[i] * (zr - zn);
                z[i] = zn;
            }

            if it % s.check_interval != 0 && it != s.max_iterations {
                continue;
            }
            self.a_mul(&x, &mut ax);
            self.at_mul(&y, &mut aty);
            self.p_mul(&x, &mut px);
            let (mut pr, mut ax_n, mut z_n) = (0.0f64, 0.0f64, 0.0f64);
            for i in 0..m {
                let einv = 1.0 / self.e[i];
                pr = pr.max(((ax[i] - z[i]) * einv).abs());
                ax_n = ax_n.max((ax[i] * einv).abs());
                z_n = z_n.max((z[i] * einv).abs());
            }
            let (mut dr, mut px_n, mut aty_n, mut q_n) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
            for j in 0..n {
                let dinv = 1.0 / (self.d[j] * self.c);
                dr = dr.max(((px[j] + qs[j] + aty[j]) * dinv).abs());
                px_n = px_n.max((px[j] * dinv).abs());
                aty_n = aty_n.max((aty[j] * dinv).abs());
                q_n = q_n.max((qs[j] * dinv).abs());
            }
            prim_res = pr;
            dual_res = dr;

            let eps_p = s.eps_abs + s.eps_rel * ax_n.max(z_n);
            let eps_d = s.eps_abs + s.eps_rel * px_n.max(aty_n).max(q_n);
            if pr <= eps_p && dr <= eps_d {
                status = QpStatus::Optimal;
                break;
            }
            if it >= PINF_FLOOR && self.primal_infeasible(&y, &y_prev, &l_full, &u_full) {
                status = QpStatus::Infeasible;
                break;
            }
            if s.adaptive_rho && it % (5 * s.check_interval) == 0 {
                let pn = pr / ax_n.max(z_n).max(1e-30);
                let dn = dr / px_n.max(aty_n).max(q_n).max(1e-30);
                let new_rho = (self.rho * (pn / dn.max(1e-30)).sqrt()).clamp(RHO_MIN, RHO_MAX);
                if new_rho > 5.0 * self.rho || new_rho < 0.2 * self.rho {
                    self.rho = new_rho;
                    self.factorize(&eq, &free);
                    rho_vec = self.rho_vector(&eq, &free);
                }
            }
        }

        // Unscale.
        let x_u: Vec<f64> = (0..n).map(|j| x[j] * self.d[j]).collect();
        let z_u: Vec<f64> = (0..m).map(|i| z[i] / self.e[i]).collect();
        let y_u: Vec<f64> = (0..m).map(|i| y[i] * self.e[i] / self.c).collect();
        let mut out = QpSolution {
            status,
            objective: objective(&self.p_orig, q, &x_u),
            x: x_u,
            y: Vec::new(),
            y_bounds: Vec::new(),
            iterations,
            polished: false,
            primal_residual: prim_res,
            dual_residual: dual_res,
            internal: Some((z_u, y_u)),
        };
        if status == QpStatus::Optimal && s.polish {
            self.polish(&mut out, q, &l_full, &u_full, &ls, &us, &z, &y);
        }
        let y_aug = &out.internal.as_ref().expect("set above").1;
        out.y = y_aug[..self.m_con].to_vec();
        out.y_bounds = vec![0.0; n];
        for (k, &j) in self.bounded.iter().enumerate() {
            out.y_bounds[j] = y_aug[self.m_con + k];
        }
        out
    }

    fn primal_infeasible(&self, y: &[f64], y_prev: &[f64], l: &[f64], u: &[f64]) -> bool {
        let m = y.len();
        let dy: Vec<f64> = (0..m).map(|i| (y[i] - y_prev[i]) * self.e[i]).collect();
        let norm = dy.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if norm < 1e-12 {
            return false;
        }
        let eps = self.settings.eps_pinf;
        let mut support = 0.0;
        for i in 0..m {
            let w = dy[i] / norm;
            if w > eps {
                if u[i] >= INFTY {
                    return false;
                }
                support += u[i] * w;
            } else if w < -eps {
                if l[i] <= -INFTY {
                    return false;
                }
                support += l[i] * w;
            }
        }
        if support >= -eps {
            return false;
        }
        // A' dy in unscaled coordinates.
        let scaled: Vec<f64> = (0..m).map(|i| (y[i] - y_prev[i]) / norm).collect();
        let mut aty = vec![0.0; self.n];
        self.at_mul(&scaled, &mut aty);
        (0..self.n).all(|j| (aty[j] / self.d[j]).abs() <= eps)
    }

    /// Active-set refinement: solve the equality-constrained KKT system on the
    /// guessed active set and keep it if it is primal-dual consistent.
    #[allow(clippy::too_many_arguments)]
    fn polish(&self, sol: &mut QpSolution, q: &[f64], l: &[f64], u: &[f64], ls: &[f64], us: &[f64], zs: &[f64], ys: &[f64]) {
        let n = self.n;
        let m = self.rows.len();
        // (row, target, sign) where sign is -1 for lower-active, +1 upper, 0 equality.
        let mut active: Vec<(usize, f64, i8)> = Vec::new();
        for i in 0..m {
            let eq = (u[i] - l[i]).abs() < 1e-12 * (1.0 + l[i].abs());
            if eq {
                active.push((i, l[i], 0));
            } else if l[i] > -INFTY && zs[i] - ls[i] < -ys[i] {
                active.push((i, l[i], -1));
            } else if u[i] < INFTY && us[i] - zs[i] < ys[i] {
                active.push((i, u[i], 1));
            }
        }
        // Dependent active rows are tolerated by the -δI block.
        let k = active.len();
        let dim = n + k;
        let mut kkt = DMatrix::<f64>::zeros(dim, dim);
        let mut exact = DMatrix::<f64>::zeros(dim, dim);
        for i in 0..n {
            for j in 0..n {
                kkt[(i, j)] = self.p_orig[(i, j)];
                exact[(i, j)] = self.p_orig[(i, j)];
            }
            kkt[(i, i)] += POLISH_DELTA;
            exact[(i, i)] += POLISH_DELTA;
        }
        for (a, &(r, _, _)) in active.iter().enumerate() {
            for &(j, v) in &self.rows_orig[r] {
                kkt[(n + a, j)] = v;
                kkt[(j, n + a)] = v;
                exact[(n + a, j)] = v;
                exact[(j, n + a)] = v;
            }
            kkt[(n + a, n + a)] = -POLISH_DELTA;
        }
        let lu = kkt.lu();
        let mut rhs = DVector::<f64>::zeros(dim);
        // Anchor at the ADMM point so directions the active set leaves free
        // (zero-cost binaries) stay put instead of drifting.
        for j in 0..n {
            rhs[j] = -q[j] + POLISH_DELTA * sol.x[j];
        }
        for (a, &(_, t, _)) in active.iter().enumerate() {
            rhs[n + a] = t;
        }
        let Some(mut sol_v) = lu.solve(&rhs) else {
            return;
        };
        for _ in 0..POLISH_REFINE {
            let resid = &rhs - &exact * &sol_v;
            match lu.solve(&resid) {
                Some(delta) => sol_v += delta,
                None => return,
            }
        }
        if sol_v.iter().any(|v| !v.is_finite()) {
            return;
        }
        let x: Vec<f64> = sol_v.as_slice()[..n].to_vec();
        let mut y = vec![0.0; m];
        for (a, &(r, _, sign)) in active.iter().enumerate() {
            let v = sol_v[n + a];
            let tol = 1e-7 * (1.0 + v.abs());
            if (sign < 0 && v > tol) || (sign > 0 && v < -tol) {
                return;
            }
            y[r] = v;
        }
        // Primal residual against all rows.
        let mut pr = 0.0f64;
        let mut z = vec![0.0; m];
        for i in 0..m {
            let v: f64 = self.rows_orig[i].iter().map(|&(j, a)| a * x[j]).sum();
            z[i] = v.clamp(l[i], u[i]);
            pr = pr.max((v - z[i]).abs());
        }
        let mut dr = 0.0f64;
        for j in 0..n {
            let mut g = q[j];
            for i in 0..n {
                g += self.p_orig[(j, i)] * x[i];
            }
            for &(r, v) in &self.cols[j] {
                // Unscale the stored column entry.
                let a = v / (self.e[r] * self.d[j]);
                g += a * y[r];
            }
            dr = dr.max(g.abs());
        }
        let tol_p = self.settings.eps_abs.max(sol.primal_residual);
        let tol_d = self.settings.eps_abs.max(sol.dual_residual);
        if pr <= tol_p && dr <= tol_d {
            sol.objective = objective(&self.p_orig, q, &x);
            sol.x = x;
            sol.internal = Some((z, y));
            sol.primal_residual = pr;
            sol.dual_residual = dr;
            sol.polished = true;
        }
    }
}

fn objective(p: &DMatrix<f64>, q: &[f64], x: &[f64]) -> f64 {
    let n = x.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += x[i] * p[(i, j)] * x[j];
        }
    }
    0.5 * quad + q.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

/// Modified Ruiz equilibration of the KKT matrix `[P A'; A 0]` followed by
/// cost scaling.
fn ruiz(p: &mut DMatrix<f64>, rows: &mut [Vec<(usize, f64)>], d: &mut [f64], e: &mut [f64], c: &mut f64, iters: usize) {
    let n = d.len();
    let safe = |v: f64| if v < 1e-4 { 1.0 } else { v.min(1e4) };
    for _ in 0..iters {
        let mut col_norm = vec![0.0f64; n];
        for j in 0..n {
            for i in 0..n {
                col_norm[j] = col_norm[j].max(p[(i, j)].abs());
            }
        }
        let mut row_norm = vec![0.0f64; rows.len()];
        for (r, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                col_norm[j] = col_norm[j].max(v.abs());
                row_norm[r] = row_norm[r].max(v.abs());
            }
        }
        let dd: Vec<f64> = col_norm.iter().map(|&v| 1.0 / safe(v).sqrt()).collect();
        let ee: Vec<f64> = row_norm.iter().map(|&v| 1.0 / safe(v).sqrt()).collect();
        for i in 0..n {
            for j in 0..n {
                p[(i, j)] *= dd[i] * dd[j];
            }
        }
        for (r, row) in rows.iter_mut().enumerate() {
            for (j, v) in row.iter_mut() {
                *v *= ee[r] * dd[*j];
            }
        }
        for j in 0..n {
            d[j] *= dd[j];
        }
        for r in 0..e.len() {
            e[r] *= ee[r];
        }
    }
    // Cost scaling from the Hessian only, so it stays valid when q changes.
    let mean: f64 = if n == 0 {
        1.0
    } else {
        (0..n).map(|j| (0..n).fold(0.0f64, |a, i| a.max(p[(i, j)].abs()))).sum::<f64>() / n as f64
    };
    let gamma = 1.0 / safe(mean);
    *p *= gamma;
    *c = gamma;
}
