//! Interior-point solver for the node relaxations.
//!
//! Problem form (P diagonal throughout this crate):
//!
//! ```text
//!     minimize    (1/2) xᵀ P x + qᵀ x
//!     subject to  l <= A x <= u
//! ```
//!
//! Variable bounds are appended as identity rows, so one constraint list
//! carries everything.  Each finite bound side becomes a slack inequality and
//! the KKT system is solved by a Mehrotra predictor-corrector iteration on
//! the normal equations `(P + CᵀWC) Δx = r`, refactored densely each step.
//! Ruiz equilibration keeps the scaled data near unit magnitude, a Farkas
//! test on the diverging duals certifies primal infeasibility, and an
//! active-set polish refines the returned point to near machine precision.
//!
//! The structure (P, A) is fixed per [`QpCore`]; bounds and the linear term
//! change freely between solves, so one core serves every node of a
//! branch-and-bound run.

use crate::model::SparseRow;
use thiserror::Error;

/// Hard numerical failure (never returned for plain infeasibility).
#[derive(Debug, Error)]
pub enum QpError {
    #[error("interior-point iteration did not converge within {0} steps")]
    MaxIterations(usize),
    #[error("KKT matrix factorization failed")]
    Factorization,
}

/// Termination state of one solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Solved,
    Infeasible,
    Unbounded,
}

/// Solver output; `x` and `y` are in the original (unscaled) units.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub status: QpStatus,
    pub x: Vec<f64>,
    /// Dual multipliers per row (bounds rows included at the tail).
    pub y: Vec<f64>,
    /// (1/2)xᵀPx + qᵀx at the returned point.
    pub objective: f64,
    pub iterations: usize,
    pub r_prim: f64,
    pub r_dual: f64,
}

/// Tunables; the defaults meet the 1e-7 residual contract after polishing.
#[derive(Debug, Clone, Copy)]
pub struct QpSettings {
    /// KKT tolerance in the equilibrated space.
    pub eps: f64,
    /// Infeasibility certificate tolerance.
    pub eps_inf: f64,
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            eps: 1e-9,
            eps_inf: 1e-4,
            max_iter: 200,
        }
    }
}

/// Dense lower-triangular Cholesky factor (row-major packed full matrix).
struct Chol {
    l: Vec<f64>,
    n: usize,
}

impl Chol {
    fn factor(mut m: Vec<f64>, n: usize) -> Option<Chol> {
        for j in 0..n {
            let mut d = m[j * n + j];
            for k in 0..j {
                d -= m[j * n + k] * m[j * n + k];
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            m[j * n + j] = d;
            for i in (j + 1)..n {
                let mut v = m[i * n + j];
                for k in 0..j {
                    v -= m[i * n + k] * m[j * n + k];
                }
                m[i * n + j] = v / d;
            }
        }
        Some(Chol { l: m, n })
    }

    fn solve(&self, b: &mut [f64]) {
        let (n, l) = (self.n, &self.l);
        for i in 0..n {
            let mut v = b[i];
            for k in 0..i {
                v -= l[i * n + k] * b[k];
            }
            b[i] = v / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut v = b[i];
            for k in (i + 1)..n {
                v -= l[k * n + i] * b[k];
            }
            b[i] = v / l[i * n + i];
        }
    }
}

/// Immutable-structure solver: fixed (P, A), per-solve (q, l, u).
pub struct QpCore {
    n: usize,
    /// Row count including the n trailing bound rows.
    m: usize,
    /// Original rows (general rows only; bound rows are implicit identity).
    rows: Vec<SparseRow>,
    /// Original diagonal of P.
    p_diag: Vec<f64>,
    /// Original linear term.
    q: Vec<f64>,
    // --- scaled data ---
    rows_s: Vec<SparseRow>,
    p_s: Vec<f64>,
    q_s: Vec<f64>,
    /// Variable scaling x = D x̄.
    d: Vec<f64>,
    /// Row scaling (z̄ = E z).
    e: Vec<f64>,
    /// Cost scaling.
    c: f64,
    /// True for internal phase-1 cores (guards against recursive rescue).
    elastic: bool,
    pub settings: QpSettings,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

/// One slack inequality `sign * (a_row · x) <= bnd` (a finite bound side).
struct Side {
    row: usize,
    sign: f64,
    bnd: f64,
}

impl QpCore {
    /// `p_diag` is the diagonal of P (i.e. twice the objective's Q),
    /// `rows` the general constraints; bound rows for all `n` variables are
    /// appended internally.  Row bound values are supplied per solve.
    /// `equality_row` is accepted for interface stability; the iteration
    /// treats an equality as a pair of opposing inequality sides.
    pub fn new(
        n: usize,
        p_diag: Vec<f64>,
        q: Vec<f64>,
        rows: Vec<SparseRow>,
        equality_row: Vec<bool>,
        settings: QpSettings,
    ) -> Result<QpCore, QpError> {
        assert_eq!(p_diag.len(), n);
        assert_eq!(q.len(), n);
        assert_eq!(equality_row.len(), rows.len());
        let m = rows.len() + n;

        // Ruiz equilibration over the KKT pattern [P Aᵀ; A 0].
        let mut d = vec![1.0; n];
        let mut e = vec![1.0; m];
        let mut c = 1.0;
        for _ in 0..10 {
            // Column norms of the scaled KKT.
            let mut col_norm = vec![0.0f64; n];
            let mut row_norm = vec![0.0f64; m];
            for j in 0..n {
                col_norm[j] = (c * p_diag[j] * d[j] * d[j]).abs();
            }
            for (i, r) in rows.iter().enumerate() {
                for (k, &cc) in r.cols.iter().enumerate() {
                    let v = (e[i] * r.vals[k] * d[cc]).abs();
                    col_norm[cc] = col_norm[cc].max(v);
                    row_norm[i] = row_norm[i].max(v);
                }
            }
            for j in 0..n {
                // Bound row j contributes |e * d_j| to both norms.
                let v = (e[rows.len() + j] * d[j]).abs();
                col_norm[j] = col_norm[j].max(v);
                row_norm[rows.len() + j] = v;
            }
            for j in 0..n {
                if col_norm[j] > 1e-12 {
                    d[j] /= col_norm[j].sqrt();
                }
            }
            for i in 0..m {
                if row_norm[i] > 1e-12 {
                    e[i] /= row_norm[i].sqrt();
                }
            }
            // Cost scaling.
            let mut p_mean = 0.0;
            for j in 0..n {
                p_mean += (c * p_diag[j] * d[j] * d[j]).abs();
            }
            p_mean /= n as f64;
            let q_norm = (0..n).map(|j| (c * q[j] * d[j]).abs()).fold(0.0, f64::max);
            let denom = p_mean.max(q_norm).max(1e-12);
            c /= denom.sqrt().max(1e-6);
        }

        // Scaled copies.
        let mut rows_s: Vec<SparseRow> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let vals = r
                    .cols
                    .iter()
                    .zip(&r.vals)
                    .map(|(&cc, &v)| e[i] * v * d[cc])
                    .collect();
                SparseRow { cols: r.cols.clone(), vals }
            })
            .collect();
        for j in 0..n {
            rows_s.push(SparseRow::new(vec![j], vec![e[rows.len() + j] * d[j]]));
        }
        let p_s: Vec<f64> = (0..n).map(|j| c * p_diag[j] * d[j] * d[j]).collect();
        let q_s: Vec<f64> = (0..n).map(|j| c * q[j] * d[j]).collect();

        Ok(QpCore {
            n,
            m,
            rows,
            p_diag,
            q,
            rows_s,
            p_s,
            q_s,
            d,
            e,
            c,
            elastic: false,
            settings,
        })
    }

    /// Replaces the linear term (same structure); used by scalarization sweeps.
    pub fn set_linear(&mut self, q: Vec<f64>) {
        assert_eq!(q.len(), self.n);
        self.q_s = (0..self.n).map(|j| self.c * q[j] * self.d[j]).collect();
        self.q = q;
    }

    fn a_times(&self, x: &[f64], out: &mut [f64]) {
        for (i, r) in self.rows_s.iter().enumerate() {
            out[i] = r.dot(x);
        }
    }

    /// Solves with the general-row bounds `(row_l, row_u)` and variable
    /// bounds `(lb, ub)`.  `warm` is an unscaled (x, y) pair; the primal part
    /// seeds the start point.
    pub fn solve(
        &mut self,
        row_l: &[f64],
        row_u: &[f64],
        lb: &[f64],
        ub: &[f64],
        warm: Option<(&[f64], &[f64])>,
    ) -> Result<QpSolution, QpError> {
        let (n, m) = (self.n, self.m);
        let n_rows = self.rows.len();
        assert_eq!(row_l.len(), n_rows);
        assert_eq!(row_u.len(), n_rows);
        assert_eq!(lb.len(), n);
        assert_eq!(ub.len(), n);
        let set = self.settings;

        // Scaled bounds.
        let mut l_s = vec![0.0; m];
        let mut u_s = vec![0.0; m];
        for i in 0..n_rows {
            l_s[i] = self.e[i] * row_l[i];
            u_s[i] = self.e[i] * row_u[i];
        }
        for j in 0..n {
            l_s[n_rows + j] = self.e[n_rows + j] * lb[j];
            u_s[n_rows + j] = self.e[n_rows + j] * ub[j];
        }

        // One slack inequality per finite bound side.
        let mut sides: Vec<Side> = Vec::with_capacity(2 * m);
        for i in 0..m {
            if u_s[i].is_finite() {
                sides.push(Side { row: i, sign: 1.0, bnd: u_s[i] });
            }
            if l_s[i].is_finite() {
                sides.push(Side { row: i, sign: -1.0, bnd: -l_s[i] });
            }
        }
        let mc = sides.len();
        assert!(mc > 0, "fully unconstrained problems are not expected here");
        let d_inf = sides.iter().fold(0.0f64, |a, s| a.max(s.bnd.abs()));

        // Start point: warm primal seed, unit slacks/duals pushed interior.
        let mut x = vec![0.0; n];
        if let Some((wx, _)) = warm {
            for j in 0..n {
                x[j] = wx[j] / self.d[j];
            }
        }
        let mut act = vec![0.0; m];
        self.a_times(&x, &mut act);
        let mut s: Vec<f64> = sides
            .iter()
            .map(|sd| (sd.bnd - sd.sign * act[sd.row]).max(1.0))
            .collect();
        let mut z = vec![1.0; mc];

        let mut rd = vec![0.0; n];
        let mut rp = vec![0.0; mc];
        let mut y_row = vec![0.0; m];
        let mut w_row = vec![0.0; m];
        let mut mtx = vec![0.0; n * n];
        let mut rhs = vec![0.0; n];
        let mut g = vec![0.0; mc];
        let mut h_row = vec![0.0; m];
        let mut cdx = vec![0.0; mc];
        let mut ds_aff = vec![0.0; mc];
        let mut dz_aff = vec![0.0; mc];

        let mut iterations = 0usize;
        let mut next_try = 0usize;
        loop {
            // Residuals.  y_row folds the per-side duals back onto rows.
            self.a_times(&x, &mut act);
            for i in 0..m {
                y_row[i] = 0.0;
            }
            for (k, sd) in sides.iter().enumerate() {
                rp[k] = sd.sign * act[sd.row] + s[k] - sd.bnd;
                y_row[sd.row] += sd.sign * z[k];
            }
            for j in 0..n {
                rd[j] = self.p_s[j] * x[j] + self.q_s[j];
            }
            for (i, r) in self.rows_s.iter().enumerate() {
                if y_row[i] != 0.0 {
                    for (k, &cc) in r.cols.iter().enumerate() {
                        rd[cc] += r.vals[k] * y_row[i];
                    }
                }
            }
            let mu = z.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / mc as f64;
            let rp_inf = inf_norm(&rp);
            let rd_inf = inf_norm(&rd);

            let tol_p = set.eps * (1.0 + d_inf);
            let tol_d = set.eps * (1.0 + inf_norm(&self.q_s));
            if rp_inf <= tol_p && rd_inf <= tol_d && mu <= set.eps * (1.0 + d_inf) {
                let z_rows: Vec<f64> = act.clone();
                return Ok(self.finish(x, y_row, z_rows, &l_s, &u_s, iterations));
            }
            // Degenerate problems stall short of the strict tolerance (the
            // dual iterate can wander on a degenerate face even though the
            // primal has converged); once primal feasibility and
            // complementarity are tight the active-set polish usually lands
            // the exact optimum, so try it and keep the result if the
            // recomputed (unscaled) residuals meet the contract.
            let loose = 1e-6 * (1.0 + d_inf);
            if rp_inf <= loose && mu <= loose && iterations >= next_try {
                let sol =
                    self.finish(x.clone(), y_row.clone(), act.clone(), &l_s, &u_s, iterations);
                if self.contract_met(&sol, &l_s, &u_s) {
                    return Ok(sol);
                }
                next_try = iterations + 10;
            }

            // Farkas test: the folded duals live in the valid sign cone by
            // construction (only finite sides carry multipliers), so a
            // vanishing Aᵀy with negative support certifies infeasibility.
            let y_norm = inf_norm(&y_row);
            if iterations >= 5 && y_norm > 1e2 && rp_inf > 1e3 * tol_p {
                let mut at_y = vec![0.0; n];
                for (i, r) in self.rows.iter().enumerate() {
                    let yu = y_row[i] * self.e[i] / self.c;
                    if yu != 0.0 {
                        for (k, &cc) in r.cols.iter().enumerate() {
                            at_y[cc] += r.vals[k] * yu;
                        }
                    }
                }
                for j in 0..n {
                    at_y[j] += y_row[n_rows + j] * self.e[n_rows + j] / self.c;
                }
                let yu_norm = (0..m)
                    .map(|i| (y_row[i] * self.e[i] / self.c).abs())
                    .fold(0.0, f64::max);
                let mut support = 0.0;
                for i in 0..m {
                    let yu = y_row[i] * self.e[i] / self.c;
                    if yu > 0.0 {
                        support += (u_s[i] / self.e[i]) * yu;
                    } else if yu < 0.0 {
                        support += (l_s[i] / self.e[i]) * yu;
                    }
                }
                let x_scale = 1.0 + (0..n).map(|j| (x[j] * self.d[j]).abs()).sum::<f64>();
                if inf_norm(&at_y) * x_scale <= set.eps_inf * yu_norm
                    && support <= -set.eps_inf * yu_norm
                {
                    return Ok(QpSolution {
                        status: QpStatus::Infeasible,
                        x: vec![0.0; n],
                        y: vec![0.0; m],
                        objective: f64::INFINITY,
                        iterations,
                        r_prim: rp_inf,
                        r_dual: rd_inf,
                    });
                }
            }

            // Diverging duals with a stuck primal mean the iteration broke
            // down, most often because the node is infeasible; an elastic
            // phase-1 solve decides it either way.  A feasible breakdown is
            // handed to the finite dual active-set fallback.
            let broke = inf_norm(&y_row) > 1e6 && rp_inf > 1e3 * tol_p;
            if (broke || iterations >= set.max_iter) && !self.elastic {
                let bscale = sides.iter().fold(1.0f64, |a, sd| {
                    a.max((sd.bnd * self.e[sd.row].recip()).abs())
                });
                let (viol, _) = self.phase1(row_l, row_u, lb, ub)?;
                if viol > 1e-6 * bscale {
                    return Ok(QpSolution {
                        status: QpStatus::Infeasible,
                        x: vec![0.0; n],
                        y: vec![0.0; m],
                        objective: f64::INFINITY,
                        iterations,
                        r_prim: rp_inf,
                        r_dual: rd_inf,
                    });
                }
                return self.dual_active_set(&l_s, &u_s, iterations);
            }
            if iterations >= set.max_iter {
                return Err(QpError::MaxIterations(set.max_iter));
            }
            iterations += 1;

            // Normal matrix P + δI + CᵀWC, W = Z/S folded per row.
            for i in 0..m {
                w_row[i] = 0.0;
            }
            for (k, sd) in sides.iter().enumerate() {
                // Capped so near-degenerate complementarity cannot overflow
                // the factorization.
                w_row[sd.row] += (z[k] / s[k]).min(1e14);
            }
            let delta = 1e-11 * (1.0 + inf_norm(&self.p_s));
            let mut shift = delta;
            let chol = loop {
                for v in mtx.iter_mut() {
                    *v = 0.0;
                }
                for (i, r) in self.rows_s.iter().enumerate() {
                    if w_row[i] == 0.0 {
                        continue;
                    }
                    for (k1, &c1) in r.cols.iter().enumerate() {
                        for (k2, &c2) in r.cols.iter().enumerate() {
                            mtx[c1 * n + c2] += w_row[i] * r.vals[k1] * r.vals[k2];
                        }
                    }
                }
                for j in 0..n {
                    mtx[j * n + j] += self.p_s[j] + shift;
                }
                if let Some(f) = Chol::factor(std::mem::take(&mut mtx), n) {
                    break f;
                }
                mtx = vec![0.0; n * n];
                shift *= 1e3;
                if shift > 1.0 {
                    // The Newton system broke down for good; the iterate may
                    // already identify the active set, otherwise decide the
                    // node outright with phase 1 and the active-set fallback.
                    let sol = self.finish(
                        x.clone(),
                        y_row.clone(),
                        act.clone(),
                        &l_s,
                        &u_s,
                        iterations,
                    );
                    if self.contract_met(&sol, &l_s, &u_s) {
                        return Ok(sol);
                    }
                    if !self.elastic {
                        let bscale = sides.iter().fold(1.0f64, |a, sd| {
                            a.max((sd.bnd * self.e[sd.row].recip()).abs())
                        });
                        let (viol, _) = self.phase1(row_l, row_u, lb, ub)?;
                        if viol > 1e-6 * bscale {
                            return Ok(QpSolution {
                                status: QpStatus::Infeasible,
                                x: vec![0.0; n],
                                y: vec![0.0; m],
                                objective: f64::INFINITY,
                                iterations,
                                r_prim: inf_norm(&rp),
                                r_dual: inf_norm(&rd),
                            });
                        }
                        return self.dual_active_set(&l_s, &u_s, iterations);
                    }
                    return Err(QpError::Factorization);
                }
            };
            mtx = vec![0.0; n * n]; // reclaimed by the next iteration

            // Solves (P + CᵀWC) Δx = -rd - Cᵀ[(z∘rp - rc)/s] for a given rc,
            // then recovers Δs, Δz.
            let newton = |rc: &[f64],
                              g: &mut [f64],
                              h_row: &mut [f64],
                              rhs: &mut [f64],
                              cdx: &mut [f64]|
             -> (Vec<f64>, Vec<f64>, Vec<f64>) {
                for k in 0..mc {
                    g[k] = (z[k] * rp[k] - rc[k]) / s[k];
                }
                for i in 0..m {
                    h_row[i] = 0.0;
                }
                for (k, sd) in sides.iter().enumerate() {
                    h_row[sd.row] += sd.sign * g[k];
                }
                for j in 0..n {
                    rhs[j] = -rd[j];
                }
                for (i, r) in self.rows_s.iter().enumerate() {
                    if h_row[i] != 0.0 {
                        for (k, &cc) in r.cols.iter().enumerate() {
                            rhs[cc] -= r.vals[k] * h_row[i];
                        }
                    }
                }
                chol.solve(rhs);
                let dx = rhs.to_vec();
                let mut adx = vec![0.0; m];
                self.a_times(&dx, &mut adx);
                let mut ds = vec![0.0; mc];
                let mut dz = vec![0.0; mc];
                for (k, sd) in sides.iter().enumerate() {
                    cdx[k] = sd.sign * adx[sd.row];
                    ds[k] = -rp[k] - cdx[k];
                    dz[k] = -(rc[k] + z[k] * ds[k]) / s[k];
                }
                (dx, ds, dz)
            };

            // Affine (predictor) direction.
            let rc_aff: Vec<f64> = (0..mc).map(|k| z[k] * s[k]).collect();
            let (_dx_a, ds_a, dz_a) = newton(&rc_aff, &mut g, &mut h_row, &mut rhs, &mut cdx);
            ds_aff.copy_from_slice(&ds_a);
            dz_aff.copy_from_slice(&dz_a);
            let step = |v: &[f64], dv: &[f64]| -> f64 {
                let mut a = 1.0f64;
                for k in 0..v.len() {
                    if dv[k] < 0.0 {
                        a = a.min(-v[k] / dv[k]);
                    }
                }
                a
            };
            let a_p = step(&s, &ds_aff);
            let a_d = step(&z, &dz_aff);
            let mu_aff = (0..mc)
                .map(|k| (s[k] + a_p * ds_aff[k]) * (z[k] + a_d * dz_aff[k]))
                .sum::<f64>()
                / mc as f64;
            let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

            // Corrector.
            let rc: Vec<f64> = (0..mc)
                .map(|k| z[k] * s[k] + ds_aff[k] * dz_aff[k] - sigma * mu)
                .collect();
            // A common primal/dual step keeps the dual residual contracting
            // (P couples x into the dual equation, so split steps can grow it).
            let (dx, ds, dz) = newton(&rc, &mut g, &mut h_row, &mut rhs, &mut cdx);
            let a = (0.995 * step(&s, &ds).min(step(&z, &dz))).min(1.0);
            for j in 0..n {
                x[j] += a * dx[j];
            }
            for k in 0..mc {
                s[k] += a * ds[k];
                z[k] += a * dz[k];
            }
        }
    }

    /// Elastic phase-1: minimum total violation of the general rows subject
    /// to the (always consistent) variable boxes.  Decides feasibility when
    /// the main iteration diverges; also returns the minimizing point.
    fn phase1(
        &self,
        row_l: &[f64],
        row_u: &[f64],
        lb: &[f64],
        ub: &[f64],
    ) -> Result<(f64, Vec<f64>), QpError> {
        let n = self.n;
        let nr = self.rows.len();
        let nt = n + nr;
        let mut rows = Vec::new();
        for (i, r) in self.rows.iter().enumerate() {
            if row_u[i].is_finite() {
                let mut cols = r.cols.clone();
                let mut vals = r.vals.clone();
                cols.push(n + i);
                vals.push(-1.0);
                rows.push((SparseRow::new(cols, vals), row_u[i]));
            }
            if row_l[i].is_finite() {
                let mut cols = r.cols.clone();
                let mut vals: Vec<f64> = r.vals.iter().map(|v| -v).collect();
                cols.push(n + i);
                vals.push(-1.0);
                rows.push((SparseRow::new(cols, vals), -row_l[i]));
            }
        }
        let mut lin = vec![0.0; nt];
        for v in lin[n..].iter_mut() {
            *v = 1.0;
        }
        let (p1_rows, p1_u): (Vec<SparseRow>, Vec<f64>) = rows.into_iter().unzip();
        let p1_l = vec![f64::NEG_INFINITY; p1_rows.len()];
        let eq = vec![false; p1_rows.len()];
        let mut core = QpCore::new(nt, vec![0.0; nt], lin, p1_rows, eq, self.settings)?;
        core.elastic = true;
        let mut p1_lb = lb.to_vec();
        let mut p1_ub = ub.to_vec();
        p1_lb.extend(std::iter::repeat(0.0).take(nr));
        p1_ub.extend(std::iter::repeat(f64::INFINITY).take(nr));
        let sol = core.solve(&p1_l, &p1_u, &p1_lb, &p1_ub, None)?;
        Ok((sol.objective, sol.x[..n].to_vec()))
    }

    /// Dual active-set solve (Goldfarb–Idnani) of the node, used when the
    /// interior-point iteration breaks down on a degenerate face.  Runs on
    /// the δ-regularized diagonal Hessian in original units, starting from
    /// the unconstrained minimizer; the working set stays linearly
    /// independent by construction and the method terminates finitely, so
    /// it decides the nodes the interior path cannot.  The regularization
    /// bias is removed afterwards by the usual polish.
    fn dual_active_set(
        &self,
        l_s: &[f64],
        u_s: &[f64],
        iterations: usize,
    ) -> Result<QpSolution, QpError> {
        let n = self.n;
        let m = self.m;
        let delta = 1e-8 * (1.0 + inf_norm(&self.p_diag));
        let h_inv: Vec<f64> = (0..n).map(|j| 1.0 / (self.p_diag[j] + delta)).collect();

        // Sides in original units with unit-norm rows, sign folded in:
        // a·x <= b, multiplier >= 0.
        struct USide {
            a: SparseRow,
            b: f64,
            row: usize,
            sign: i8,
            scale: f64,
        }
        let mut sides: Vec<USide> = Vec::new();
        let mut bscale = 1.0f64;
        for i in 0..m {
            let base = if i < self.rows.len() {
                self.rows[i].clone()
            } else {
                SparseRow::new(vec![i - self.rows.len()], vec![1.0])
            };
            let sc = inf_norm(&base.vals).max(1e-300);
            let (lo, hi) = (l_s[i] / self.e[i], u_s[i] / self.e[i]);
            if hi.is_finite() {
                let vals = base.vals.iter().map(|v| v / sc).collect();
                sides.push(USide {
                    a: SparseRow { cols: base.cols.clone(), vals },
                    b: hi / sc,
                    row: i,
                    sign: 1,
                    scale: sc,
                });
                bscale = bscale.max(hi.abs());
            }
            if lo.is_finite() {
                let vals = base.vals.iter().map(|v| -v / sc).collect();
                sides.push(USide {
                    a: SparseRow { cols: base.cols, vals },
                    b: -lo / sc,
                    row: i,
                    sign: -1,
                    scale: sc,
                });
                bscale = bscale.max(lo.abs());
            }
        }
        let tol_feas = 1e-10 * (1.0 + bscale);

        let mut x: Vec<f64> = (0..n).map(|j| -self.q[j] * h_inv[j]).collect();
        let mut w_set: Vec<usize> = Vec::new();
        let mut u: Vec<f64> = Vec::new();

        // K = A_W H⁻¹ A_Wᵀ, refactored whenever the working set changes.
        let factor_k = |w_set: &[usize]| -> Option<Chol> {
            let ma = w_set.len();
            if ma == 0 {
                return Chol::factor(Vec::new(), 0);
            }
            let mut k = vec![0.0; ma * ma];
            let mut dmax = 0.0f64;
            for r in 0..ma {
                for s in 0..=r {
                    let (ar, as_) = (&sides[w_set[r]].a, &sides[w_set[s]].a);
                    let mut v = 0.0;
                    for (idx, &cr) in ar.cols.iter().enumerate() {
                        for (jdx, &cs) in as_.cols.iter().enumerate() {
                            if cr == cs {
                                v += ar.vals[idx] * h_inv[cr] * as_.vals[jdx];
                            }
                        }
                    }
                    k[r * ma + s] = v;
                    k[s * ma + r] = v;
                }
                dmax = dmax.max(k[r * ma + r]);
            }
            let reg = 1e-13 * (1.0 + dmax);
            for r in 0..ma {
                k[r * ma + r] += reg;
            }
            Chol::factor(k, ma)
        };
        let mut chol = factor_k(&w_set).ok_or(QpError::Factorization)?;

        let mut steps = 0usize;
        let step_cap = 200 * (n + 1);
        loop {
            // Most violated side.
            let mut p = usize::MAX;
            let mut viol = tol_feas;
            for (k, sd) in sides.iter().enumerate() {
                let v = sd.a.dot(&x) - sd.b;
                if v > viol {
                    viol = v;
                    p = k;
                }
            }
            if p == usize::MAX {
                break;
            }

            // Bring side p into the working set via primal/dual steps.
            loop {
                steps += 1;
                if steps > step_cap {
                    return Err(QpError::MaxIterations(steps));
                }
                let ma = w_set.len();
                // r = K⁻¹ A_W H⁻¹ a_p ; z = H⁻¹ (a_p - A_Wᵀ r).
                let mut r = vec![0.0; ma];
                for (k, &w) in w_set.iter().enumerate() {
                    let (aw, ap) = (&sides[w].a, &sides[p].a);
                    let mut v = 0.0;
                    for (idx, &cw) in aw.cols.iter().enumerate() {
                        for (jdx, &cp) in ap.cols.iter().enumerate() {
                            if cw == cp {
                                v += aw.vals[idx] * h_inv[cw] * ap.vals[jdx];
                            }
                        }
                    }
                    r[k] = v;
                }
                chol.solve(&mut r);
                let mut z = vec![0.0; n];
                for (idx, &c) in sides[p].a.cols.iter().enumerate() {
                    z[c] = sides[p].a.vals[idx];
                }
                for (k, &w) in w_set.iter().enumerate() {
                    for (idx, &c) in sides[w].a.cols.iter().enumerate() {
                        z[c] -= sides[w].a.vals[idx] * r[k];
                    }
                }
                for j in 0..n {
                    z[j] *= h_inv[j];
                }
                let ztn = sides[p].a.dot(&z);
                let h_max = h_inv.iter().fold(0.0f64, |a, &b| a.max(b));
                let primal_ok = ztn > 1e-13 * h_max.max(1.0);

                let v_p = sides[p].a.dot(&x) - sides[p].b;
                if v_p <= tol_feas {
                    break; // drift closed the violation; re-scan
                }
                let t2 = if primal_ok { v_p / ztn } else { f64::INFINITY };
                let mut t1 = f64::INFINITY;
                let mut blk = usize::MAX;
                for k in 0..ma {
                    if r[k] > 1e-12 && u[k] / r[k] < t1 {
                        t1 = u[k] / r[k];
                        blk = k;
                    }
                }
                let t = t1.min(t2);
                if !t.is_finite() {
                    // No primal progress and no blocking dual: the side is
                    // inconsistent with the working set.
                    return Ok(QpSolution {
                        status: QpStatus::Infeasible,
                        x: vec![0.0; n],
                        y: vec![0.0; m],
                        objective: f64::INFINITY,
                        iterations: iterations + steps,
                        r_prim: v_p,
                        r_dual: 0.0,
                    });
                }
                for k in 0..ma {
                    u[k] -= t * r[k];
                }
                if t == t2 {
                    for j in 0..n {
                        x[j] -= t * z[j];
                    }
                    w_set.push(p);
                    u.push(t);
                    chol = factor_k(&w_set).ok_or(QpError::Factorization)?;
                    break;
                }
                // Partial (dual) step: multiplier `blk` hit zero; drop it.
                if primal_ok {
                    for j in 0..n {
                        x[j] -= t * z[j];
                    }
                }
                w_set.remove(blk);
                u.remove(blk);
                chol = factor_k(&w_set).ok_or(QpError::Factorization)?;
            }
        }

        // Fold side multipliers onto rows and polish away the δ bias.
        let mut y = vec![0.0; m];
        let mut active: Vec<(usize, f64, i8)> = Vec::new();
        for (k, &w) in w_set.iter().enumerate() {
            let sd = &sides[w];
            y[sd.row] += f64::from(sd.sign) * u[k] / sd.scale;
            let span = (u_s[sd.row] - l_s[sd.row]).abs();
            let bnd = if sd.sign > 0 {
                u_s[sd.row] / self.e[sd.row]
            } else {
                l_s[sd.row] / self.e[sd.row]
            };
            let flag = if span <= 1e-15 { 0 } else { sd.sign };
            active.push((sd.row, bnd, flag));
        }
        if let Some((px, pnu)) = self.polish(&active) {
            let mut py = vec![0.0; m];
            for (k, &(i, _, _)) in active.iter().enumerate() {
                py[i] += pnu[k];
            }
            let sol = self.package(px, py, l_s, u_s, iterations + steps);
            if self.contract_met(&sol, l_s, u_s) {
                return Ok(sol);
            }
        }
        let sol = self.package(x, y, l_s, u_s, iterations + steps);
        Ok(sol)
    }

    /// Residual contract in original units: 1e-7 relative to the bound and
    /// gradient magnitudes.
    fn contract_met(&self, sol: &QpSolution, l_s: &[f64], u_s: &[f64]) -> bool {
        let mut bscale = 1.0f64;
        for i in 0..self.m {
            let lo = l_s[i] / self.e[i];
            let hi = u_s[i] / self.e[i];
            if lo.is_finite() {
                bscale = bscale.max(lo.abs());
            }
            if hi.is_finite() {
                bscale = bscale.max(hi.abs());
            }
        }
        let mut gscale = 1.0f64;
        for j in 0..self.n {
            gscale = gscale
                .max((self.p_diag[j] * sol.x[j]).abs())
                .max(self.q[j].abs());
        }
        if sol.r_prim > 1e-7 * bscale || sol.r_dual > 1e-7 * gscale {
            return false;
        }
        // Dual feasibility and complementarity: a multiplier may only push
        // against a finite bound its row actually sits on.
        for i in 0..self.m {
            let y = sol.y[i];
            if y.abs() <= 1e-7 * gscale {
                continue;
            }
            let v = if i < self.rows.len() {
                self.rows[i].dot(&sol.x)
            } else {
                sol.x[i - self.rows.len()]
            };
            let b = if y > 0.0 { u_s[i] } else { l_s[i] } / self.e[i];
            if !b.is_finite() || (v - b).abs() > 1e-6 * (1.0 + b.abs()) {
                return false;
            }
        }
        true
    }

    /// Unscale, polish, and package the solution; the reported residuals are
    /// recomputed at the returned point in original units.
    fn finish(
        &self,
        x_s: Vec<f64>,
        y_s: Vec<f64>,
        z_s: Vec<f64>,
        l_s: &[f64],
        u_s: &[f64],
        iterations: usize,
    ) -> QpSolution {
        let (n, m) = (self.n, self.m);
        let x: Vec<f64> = (0..n).map(|j| x_s[j] * self.d[j]).collect();
        let y: Vec<f64> = (0..m).map(|i| y_s[i] * self.e[i] / self.c).collect();

        // Active set from the scaled iterates.  A row sitting hard on a
        // bound is taken as active outright (a converged iterate cannot sit
        // this close to a bound the optimum leaves); in the looser band the
        // multiplier sign decides.  The choice below re-verifies the
        // polished point either way.
        let tight = 1e-6;
        let tol = 1e-5;
        // (row, unscaled bound, side: -1 lower / 0 equality / +1 upper)
        let mut active: Vec<(usize, f64, i8)> = Vec::new();
        for i in 0..m {
            let span = (u_s[i] - l_s[i]).abs();
            let d_lower = (z_s[i] - l_s[i]).abs() / (1.0 + l_s[i].abs());
            let d_upper = (z_s[i] - u_s[i]).abs() / (1.0 + u_s[i].abs());
            if span <= 1e-15 {
                if l_s[i].is_finite() {
                    active.push((i, l_s[i] / self.e[i], 0));
                }
            } else if l_s[i].is_finite() && (d_lower <= tight || (d_lower <= tol && y_s[i] < 0.0))
            {
                active.push((i, l_s[i] / self.e[i], -1));
            } else if u_s[i].is_finite() && (d_upper <= tight || (d_upper <= tol && y_s[i] > 0.0))
            {
                active.push((i, u_s[i] / self.e[i], 1));
            }
        }

        // Polish on the detected set, dropping wrong-signed multipliers and
        // re-polishing (redundant active rows split the dual arbitrarily;
        // the drop loop is monotone, so a few passes settle it).  Keep
        // whichever point stands up to the recomputed residuals; degenerate
        // faces where no working set verifies are left to the dual
        // active-set fallback.
        let raw = self.package(x, y, l_s, u_s, iterations);
        let mut polished = None;
        for _ in 0..4 {
            let Some((px, pnu)) = self.polish(&active) else {
                break;
            };
            if px.iter().any(|v| !v.is_finite()) {
                break;
            }
            let tol_nu = 1e-9 * (1.0 + inf_norm(&pnu));
            let keep: Vec<bool> = active
                .iter()
                .enumerate()
                .map(|(k, &(_, _, side))| match side {
                    -1 => pnu[k] <= tol_nu,
                    1 => pnu[k] >= -tol_nu,
                    _ => true,
                })
                .collect();
            let mut py = vec![0.0; m];
            for (k, &(i, _, _)) in active.iter().enumerate() {
                py[i] += pnu[k];
            }
            polished = Some(self.package(px, py, l_s, u_s, iterations));
            if keep.iter().all(|&k| k) {
                break;
            }
            let mut k = 0;
            active.retain(|_| {
                let r = keep[k];
                k += 1;
                r
            });
        }
        let Some(pol) = polished else {
            return raw;
        };
        let pol_ok = self.contract_met(&pol, l_s, u_s);
        let raw_ok = self.contract_met(&raw, l_s, u_s);
        match (pol_ok, raw_ok) {
            (true, _) => pol,
            (false, true) => raw,
            _ if pol.r_prim.max(pol.r_dual) <= raw.r_prim.max(raw.r_dual) => pol,
            _ => raw,
        }
    }

    /// Packages an unscaled point: objective and true KKT residuals
    /// recomputed at `x` in original units.
    fn package(
        &self,
        x: Vec<f64>,
        y: Vec<f64>,
        l_s: &[f64],
        u_s: &[f64],
        iterations: usize,
    ) -> QpSolution {
        let (n, m) = (self.n, self.m);
        let mut objective = 0.0;
        for j in 0..n {
            objective += (0.5 * self.p_diag[j] * x[j] + self.q[j]) * x[j];
        }

        let mut r_prim = 0.0f64;
        let mut dual = vec![0.0; n];
        for j in 0..n {
            dual[j] = self.p_diag[j] * x[j] + self.q[j];
        }
        for i in 0..m {
            let v = if i < self.rows.len() {
                self.rows[i].dot(&x)
            } else {
                x[i - self.rows.len()]
            };
            let (lo, hi) = (l_s[i] / self.e[i], u_s[i] / self.e[i]);
            r_prim = r_prim.max((lo - v).max(v - hi).max(0.0));
            if y[i] != 0.0 {
                if i < self.rows.len() {
                    for (k, &c) in self.rows[i].cols.iter().enumerate() {
                        dual[c] += self.rows[i].vals[k] * y[i];
                    }
                } else {
                    dual[i - self.rows.len()] += y[i];
                }
            }
        }
        let r_dual = inf_norm(&dual);

        QpSolution {
            status: QpStatus::Solved,
            x,
            y,
            objective,
            iterations,
            r_prim,
            r_dual,
        }
    }

    /// Equality-constrained refinement on the active rows, via the Schur
    /// complement of the regularized diagonal Hessian, with iterative
    /// refinement against the unregularized KKT system.
    fn polish(&self, active: &[(usize, f64, i8)]) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.n;
        let ma = active.len();
        let delta = 1e-8 * (1.0 + inf_norm(&self.p_diag));
        let h_inv: Vec<f64> = (0..n).map(|j| 1.0 / (self.p_diag[j] + delta)).collect();
        let row_of = |i: usize| -> SparseRow {
            if i < self.rows.len() {
                self.rows[i].clone()
            } else {
                SparseRow::new(vec![i - self.rows.len()], vec![1.0])
            }
        };
        // Active rows normalized to unit magnitude (multipliers unscaled on
        // the way out); the set may hold more rows than variables, so the
        // Schur complement needs a regularization proportional to its scale.
        let mut a_act: Vec<SparseRow> = Vec::with_capacity(ma);
        let mut b_act: Vec<f64> = Vec::with_capacity(ma);
        let mut r_scale: Vec<f64> = Vec::with_capacity(ma);
        for &(i, b, _) in active {
            let mut r = row_of(i);
            let sc = inf_norm(&r.vals).max(1e-300);
            for v in r.vals.iter_mut() {
                *v /= sc;
            }
            a_act.push(r);
            b_act.push(b / sc);
            r_scale.push(sc);
        }

        // K = A H⁻¹ Aᵀ + δ_k I.
        let mut k = vec![0.0; ma * ma];
        let mut k_diag_max = 0.0f64;
        for r in 0..ma {
            for s in 0..=r {
                let mut v = 0.0;
                // Sparse dot through the diagonal.
                for (idx, &cr) in a_act[r].cols.iter().enumerate() {
                    for (jdx, &cs) in a_act[s].cols.iter().enumerate() {
                        if cr == cs {
                            v += a_act[r].vals[idx] * h_inv[cr] * a_act[s].vals[jdx];
                        }
                    }
                }
                k[r * ma + s] = v;
                k[s * ma + r] = v;
            }
            k_diag_max = k_diag_max.max(k[r * ma + r]);
        }
        let delta_k = 1e-11 * (1.0 + k_diag_max);
        for r in 0..ma {
            k[r * ma + r] += delta_k;
        }
        let chol = Chol::factor(k, ma)?;

        let solve_kkt = |r1: &[f64], r2: &[f64]| -> (Vec<f64>, Vec<f64>) {
            // H x + Aᵀν = r1; A x = r2  (H = P + δ).
            let mut tmp = vec![0.0; ma];
            for r in 0..ma {
                let mut v = -r2[r];
                for (idx, &c) in a_act[r].cols.iter().enumerate() {
                    v += a_act[r].vals[idx] * h_inv[c] * r1[c];
                }
                tmp[r] = v;
            }
            chol.solve(&mut tmp);
            let nu = tmp;
            let mut x = vec![0.0; n];
            for j in 0..n {
                x[j] = h_inv[j] * r1[j];
            }
            for (r, row) in a_act.iter().enumerate() {
                for (idx, &c) in row.cols.iter().enumerate() {
                    x[c] -= h_inv[c] * row.vals[idx] * nu[r];
                }
            }
            (x, nu)
        };

        let neg_q: Vec<f64> = self.q.iter().map(|v| -v).collect();
        let (mut x, mut nu) = solve_kkt(&neg_q, &b_act);
        // Refinement against the true (unregularized) optimality system.
        for _ in 0..3 {
            let mut r1 = vec![0.0; n];
            for j in 0..n {
                r1[j] = -self.q[j] - self.p_diag[j] * x[j];
            }
            for (r, row) in a_act.iter().enumerate() {
                for (idx, &c) in row.cols.iter().enumerate() {
                    r1[c] -= row.vals[idx] * nu[r];
                }
            }
            let mut r2 = vec![0.0; ma];
            for (r, row) in a_act.iter().enumerate() {
                r2[r] = b_act[r] - row.dot(&x);
            }
            if inf_norm(&r1) < 1e-12 && inf_norm(&r2) < 1e-12 {
                break;
            }
            let (dx, dnu) = solve_kkt(&r1, &r2);
            for j in 0..n {
                x[j] += dx[j];
            }
            for r in 0..ma {
                nu[r] += dnu[r];
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return None;
        }
        for r in 0..ma {
            nu[r] /= r_scale[r];
        }
        Some((x, nu))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve_simple(
        n: usize,
        p: Vec<f64>,
        q: Vec<f64>,
        rows: Vec<SparseRow>,
        row_l: Vec<f64>,
        row_u: Vec<f64>,
        lb: Vec<f64>,
        ub: Vec<f64>,
    ) -> QpSolution {
        let eq: Vec<bool> = row_l
            .iter()
            .zip(&row_u)
            .map(|(a, b)| (a - b).abs() < 1e-300)
            .collect();
        let mut core = QpCore::new(n, p, q, rows, eq, QpSettings::default()).unwrap();
        core.solve(&row_l, &row_u, &lb, &ub, None).unwrap()
    }

    #[test]
    fn single_variable_kkt() {
        // min x² s.t. x >= 3, x in [0,10] -> x = 3, value 9.
        let sol = solve_simple(
            1,
            vec![2.0],
            vec![0.0],
            vec![SparseRow::new(vec![0], vec![1.0])],
            vec![3.0],
            vec![f64::INFINITY],
            vec![0.0],
            vec![10.0],
        );
        assert_eq!(sol.status, QpStatus::Solved);
        assert!((sol.x[0] - 3.0).abs() < 1e-7);
        assert!((sol.objective - 9.0).abs() < 1e-6);
    }

    #[test]
    fn increasing_objective_on_ray() {
        // min g² + g s.t. g >= 5, g in [2,10] -> g = 5, value 30.
        let sol = solve_simple(
            1,
            vec![2.0],
            vec![1.0],
            vec![SparseRow::new(vec![0], vec![1.0])],
            vec![5.0],
            vec![f64::INFINITY],
            vec![2.0],
            vec![10.0],
        );
        assert!((sol.x[0] - 5.0).abs() < 1e-7);
        assert!((sol.objective - 30.0).abs() < 1e-6);
    }

    #[test]
    fn detects_empty_polytope() {
        // x <= 1 and x >= 2.
        let sol = solve_simple(
            1,
            vec![2.0],
            vec![0.0],
            vec![
                SparseRow::new(vec![0], vec![1.0]),
                SparseRow::new(vec![0], vec![1.0]),
            ],
            vec![f64::NEG_INFINITY, 2.0],
            vec![1.0, f64::INFINITY],
            vec![-10.0],
            vec![10.0],
        );
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn equality_coupled_pair() {
        // min x1² + x2² s.t. x1 + x2 = 2 -> (1,1), value 2.
        let sol = solve_simple(
            2,
            vec![2.0, 2.0],
            vec![0.0, 0.0],
            vec![SparseRow::new(vec![0, 1], vec![1.0, 1.0])],
            vec![2.0],
            vec![2.0],
            vec![-10.0, -10.0],
            vec![10.0, 10.0],
        );
        assert!((sol.x[0] - 1.0).abs() < 1e-7);
        assert!((sol.x[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn mixed_scales_converge() {
        // Badly scaled data: large linear cost, small quadratic.
        let sol = solve_simple(
            2,
            vec![2e-4, 2e4],
            vec![1e5, -3.0],
            vec![SparseRow::new(vec![0, 1], vec![1.0, 1e3])],
            vec![5e3],
            vec![f64::INFINITY],
            vec![0.0, 0.0],
            vec![1e6, 10.0],
        );
        assert_eq!(sol.status, QpStatus::Solved);
        // Optimum: x1 pinned at 0, demand row active at x2 = 5.
        assert!((sol.x[0]).abs() < 1e-4, "{}", sol.x[0]);
        assert!((sol.x[1] - 5.0).abs() < 1e-6, "{}", sol.x[1]);
        // Residuals relative to the data magnitude (~1e5) stay below 1e-7.
        assert!(sol.r_prim < 1e-7 * 5e3, "{}", sol.r_prim);
        assert!(sol.r_dual < 1e-7 * 1e5, "{}", sol.r_dual);
    }

    #[test]
    fn warm_start_reuses_structure() {
        let rows = vec![SparseRow::new(vec![0, 1], vec![1.0, 1.0])];
        let eq = vec![false];
        let mut core = QpCore::new(
            2,
            vec![2.0, 2.0],
            vec![0.0, 0.0],
            rows,
            eq,
            QpSettings::default(),
        )
        .unwrap();
        let l = vec![2.0];
        let u = vec![f64::INFINITY];
        let first = core
            .solve(&l, &u, &[-10.0, -10.0], &[10.0, 10.0], None)
            .unwrap();
        let again = core
            .solve(&l, &u, &[-10.0, -10.0], &[10.0, 10.0], Some((&first.x, &first.y)))
            .unwrap();
        assert!((again.x[0] - 1.0).abs() < 1e-7);
        assert!(again.iterations <= first.iterations + 2);
        // Tightened variable bound, same structure.
        let constrained = core
            .solve(&l, &u, &[1.5, -10.0], &[10.0, 10.0], Some((&first.x, &first.y)))
            .unwrap();
        assert!((constrained.x[0] - 1.5).abs() < 1e-6);
        assert!((constrained.x[1] - 0.5).abs() < 1e-6);
    }
}
