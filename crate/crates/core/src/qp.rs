//! Dense convex QP solver (primal active set) for the controller problems:
//!
//! ```text
//!     minimize    1/2 z' Q z + c' z
//!     subject to  A_in z >= b_in,   A_eq z = b_eq,   lb <= z <= ub
//! ```
//!
//! All problems here are tiny (n <= ~40 including slacks) and strictly
//! convex, so the working-set systems are solved as dense bordered KKT
//! systems. Infeasibility is certified through a phase-1 slack QP run on the
//! same machinery. Tie-breaking is by lowest row index throughout, which
//! makes the solver deterministic.

use nalgebra::{DMatrix, DVector};

/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-8;
/// Dual feasibility tolerance (multipliers may be this far below zero).
pub const MU_TOL: f64 = 1e-10;
/// Condition-number proxy threshold beyond which the KKT system is damped.
pub const COND_LIMIT: f64 = 1e12;
/// Tikhonov damping applied to ill-conditioned KKT systems.
pub const DAMPING: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct QProblem {
    pub q: DMatrix<f64>,
    pub c: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub lower: Option<DVector<f64>>,
    pub upper: Option<DVector<f64>>,
}

impl QProblem {
    /// Problem with no constraints; rows can be appended afterwards.
    pub fn new(q: DMatrix<f64>, c: DVector<f64>) -> Self {
        let n = c.len();
        assert_eq!(q.nrows(), n);
        assert_eq!(q.ncols(), n);
        debug_assert!((&q - q.transpose()).amax() <= 1e-12, "Q must be symmetric");
        QProblem {
            q,
            c,
            a_in: DMatrix::zeros(0, n),
            b_in: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            lower: None,
            upper: None,
        }
    }

    /// min ‖z − target‖² in n variables.
    pub fn nearest_point(target: &DVector<f64>) -> Self {
        let n = target.len();
        QProblem::new(DMatrix::identity(n, n) * 2.0, -2.0 * target)
    }

    pub fn push_ineq(&mut self, row: &[f64], b: f64) {
        let n = self.c.len();
        assert_eq!(row.len(), n);
        self.a_in = stack_row(&self.a_in, row);
        self.b_in = stack_val(&self.b_in, b);
    }

    pub fn push_eq(&mut self, row: &[f64], b: f64) {
        let n = self.c.len();
        assert_eq!(row.len(), n);
        self.a_eq = stack_row(&self.a_eq, row);
        self.b_eq = stack_val(&self.b_eq, b);
    }

    /// Inequality rows plus finite box bounds expanded to rows, in order:
    /// user rows, then lower bounds, then upper bounds.
    fn expanded_rows(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.c.len();
        let mut rows: Vec<f64> = Vec::new();
        let mut b: Vec<f64> = Vec::new();
        for i in 0..self.a_in.nrows() {
            rows.extend(self.a_in.row(i).iter());
            b.push(self.b_in[i]);
        }
        if let Some(lo) = &self.lower {
            for j in 0..n {
                if lo[j].is_finite() {
                    let mut r = vec![0.0; n];
                    r[j] = 1.0;
                    rows.extend(r);
                    b.push(lo[j]);
                }
            }
        }
        if let Some(hi) = &self.upper {
            for j in 0..n {
                if hi[j].is_finite() {
                    let mut r = vec![0.0; n];
                    r[j] = -1.0;
                    rows.extend(r);
                    b.push(-hi[j]);
                }
            }
        }
        let m = b.len();
        (DMatrix::from_row_slice(m, n, &rows), DVector::from_vec(b))
    }
}

fn stack_row(a: &DMatrix<f64>, row: &[f64]) -> DMatrix<f64> {
    let (m, n) = (a.nrows(), a.ncols());
    let mut out = DMatrix::zeros(m + 1, n);
    out.view_mut((0, 0), (m, n)).copy_from(a);
    for (j, v) in row.iter().enumerate() {
        out[(m, j)] = *v;
    }
    out
}

fn stack_val(b: &DVector<f64>, v: f64) -> DVector<f64> {
    let mut out = DVector::zeros(b.len() + 1);
    out.rows_mut(0, b.len()).copy_from(b);
    out[b.len()] = v;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QSolution {
    pub z: DVector<f64>,
    pub status: QpStatus,
    /// Active inequality rows at the optimum (expanded indexing: user rows,
    /// then lower-bound rows, then upper-bound rows).
    pub active_set: Vec<usize>,
    /// Multipliers over expanded inequality rows followed by equality rows.
    pub multipliers: DVector<f64>,
    pub ill_conditioned: bool,
}

/// One-shot cold-started solve.
pub fn solve(qp: &QProblem) -> QSolution {
    ActiveSetSolver::new().solve(qp)
}

/// Solver instance holding the warm-start cache of one controller. One
/// instance per control loop; instances are independent.
#[derive(Debug, Default, Clone)]
pub struct ActiveSetSolver {
    last_z: Option<DVector<f64>>,
    last_active: Vec<usize>,
}

struct CoreOut {
    z: DVector<f64>,
    mu: DVector<f64>,
    nu: DVector<f64>,
    active: Vec<usize>,
    ill: bool,
}

impl ActiveSetSolver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn solve(&mut self, qp: &QProblem) -> QSolution {
        let n = qp.c.len();
        let (a, b) = qp.expanded_rows();
        let m = a.nrows();
        let q_rows = qp.a_eq.nrows();

        let mut z0 = match &self.last_z {
            Some(z) if z.len() == n => z.clone(),
            _ => DVector::zeros(n),
        };

        let mut ill = false;
        if violation(&a, &b, &qp.a_eq, &qp.b_eq, &z0) > FEAS_TOL {
            match phase1(&a, &b, &qp.a_eq, &qp.b_eq, &z0, &mut ill) {
                Some(z) => z0 = z,
                None => {
                    self.last_z = None;
                    self.last_active.clear();
                    return QSolution {
                        z: DVector::zeros(n),
                        status: QpStatus::Infeasible,
                        active_set: Vec::new(),
                        multipliers: DVector::zeros(m + q_rows),
                        ill_conditioned: ill,
                    };
                }
            }
        }

        let w0: Vec<usize> = self
            .last_active
            .iter()
            .copied()
            .filter(|&i| i < m && (a.row(i).dot(&z0.transpose()) - b[i]).abs() <= 1e-7)
            .take(n.saturating_sub(q_rows))
            .collect();

        let core = active_set_core(&qp.q, &qp.c, &a, &b, &qp.a_eq, &qp.b_eq, z0, w0, &mut ill);

        self.last_z = Some(core.z.clone());
        self.last_active = core.active.clone();

        let mut multipliers = DVector::zeros(m + q_rows);
        for (k, &i) in core.active.iter().enumerate() {
            multipliers[i] = core.mu[k];
        }
        for j in 0..q_rows {
            multipliers[m + j] = core.nu[j];
        }
        QSolution {
            z: core.z,
            status: QpStatus::Optimal,
            active_set: core.active,
            multipliers,
            ill_conditioned: core.ill,
        }
    }
}

fn violation(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    z: &DVector<f64>,
) -> f64 {
    let mut v: f64 = 0.0;
    for i in 0..a.nrows() {
        v = v.max(b[i] - a.row(i).dot(&z.transpose()));
    }
    for j in 0..a_eq.nrows() {
        v = v.max((a_eq.row(j).dot(&z.transpose()) - b_eq[j]).abs());
    }
    v
}

/// Feasibility restoration: minimize slack norms over a lifted problem that
/// is feasible by construction at the start point. Residual violations at
/// the lifted optimum scale with the tiny `z`-regularization, so a clean
/// `FEAS_TOL` classification is possible.
fn phase1(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    z0: &DVector<f64>,
    ill: &mut bool,
) -> Option<DVector<f64>> {
    let n = z0.len();
    let m = a.nrows();
    let q_rows = a_eq.nrows();
    let nl = n + m + q_rows;
    let eps = 1e-10;

    let mut q_mat = DMatrix::zeros(nl, nl);
    for j in 0..n {
        q_mat[(j, j)] = 2.0 * eps;
    }
    for j in n..nl {
        q_mat[(j, j)] = 2.0;
    }
    let mut c = DVector::zeros(nl);
    for j in 0..n {
        c[j] = -2.0 * eps * z0[j];
    }

    // Rows: [A I 0] w >= b, then s >= 0.
    let mut a_l = DMatrix::zeros(2 * m, nl);
    let mut b_l = DVector::zeros(2 * m);
    for i in 0..m {
        for j in 0..n {
            a_l[(i, j)] = a[(i, j)];
        }
        a_l[(i, n + i)] = 1.0;
        b_l[i] = b[i];
        a_l[(m + i, n + i)] = 1.0;
    }
    let mut a_eq_l = DMatrix::zeros(q_rows, nl);
    let mut b_eq_l = DVector::zeros(q_rows);
    for i in 0..q_rows {
        for j in 0..n {
            a_eq_l[(i, j)] = a_eq[(i, j)];
        }
        a_eq_l[(i, n + m + i)] = 1.0;
        b_eq_l[i] = b_eq[i];
    }

    let mut w_start = z0.clone().resize_vertically(nl, 0.0);
    let mut w0 = Vec::new();
    for i in 0..m {
        let viol = b[i] - a.row(i).dot(&z0.transpose());
        if viol > 0.0 {
            w_start[n + i] = viol;
            w0.push(i); // [A I 0] row holds with equality
        } else {
            w0.push(m + i); // slack at zero
        }
    }
    for i in 0..q_rows {
        w_start[n + m + i] = b_eq_l[i] - a_eq.row(i).dot(&z0.transpose());
    }
    w0.truncate(nl.saturating_sub(q_rows));

    let core = active_set_core(&q_mat, &c, &a_l, &b_l, &a_eq_l, &b_eq_l, w_start, w0, ill);
    let z = DVector::from_iterator(n, core.z.iter().take(n).copied());
    if violation(a, b, a_eq, b_eq, &z) <= FEAS_TOL {
        Some(z)
    } else {
        None
    }
}

/// Primal active-set iteration from a feasible start.
#[allow(clippy::too_many_arguments)]
fn active_set_core(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    mut z: DVector<f64>,
    mut w: Vec<usize>,
    ill: &mut bool,
) -> CoreOut {
    let n = z.len();
    let m = a.nrows();
    let q_rows = a_eq.nrows();
    let max_iter = 50 * (m + q_rows + n) + 200;

    let mut mu = DVector::zeros(w.len());
    let mut nu = DVector::zeros(q_rows);

    for _ in 0..max_iter {
        let k = q_rows + w.len();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(q);
        for (idx, row) in (0..q_rows).map(|j| a_eq.row(j)).enumerate() {
            for col in 0..n {
                kkt[(n + idx, col)] = row[col];
                kkt[(col, n + idx)] = row[col];
            }
        }
        for (idx, &i) in w.iter().enumerate() {
            for col in 0..n {
                kkt[(n + q_rows + idx, col)] = a[(i, col)];
                kkt[(col, n + q_rows + idx)] = a[(i, col)];
            }
        }
        let grad = q * &z + c;
        let mut rhs = DVector::zeros(n + k);
        for j in 0..n {
            rhs[j] = -grad[j];
        }
        for j in 0..q_rows {
            rhs[n + j] = b_eq[j] - a_eq.row(j).dot(&z.transpose());
        }
        for (idx, &i) in w.iter().enumerate() {
            rhs[n + q_rows + idx] = b[i] - a.row(i).dot(&z.transpose());
        }

        let sol = solve_kkt(kkt, &rhs, n, ill);
        let d = DVector::from_iterator(n, sol.iter().take(n).copied());
        nu = DVector::from_iterator(q_rows, (0..q_rows).map(|j| -sol[n + j]));
        mu = DVector::from_iterator(w.len(), (0..w.len()).map(|j| -sol[n + q_rows + j]));

        if d.amax() <= 1e-11 * (1.0 + z.amax()) {
            // Candidate optimum: drop the most negative multiplier, lowest
            // row index on ties.
            let mut drop: Option<(usize, f64, usize)> = None;
            for (idx, &row) in w.iter().enumerate() {
                if mu[idx] < -1e-12
                    && drop.map_or(true, |(_, best, best_row)| {
                        mu[idx] < best || (mu[idx] == best && row < best_row)
                    })
                {
                    drop = Some((idx, mu[idx], row));
                }
            }
            match drop {
                Some((idx, _, _)) => {
                    w.remove(idx);
                }
                None => break,
            }
            continue;
        }

        // Ratio test toward the full step.
        let mut alpha = 1.0;
        let mut blocker = None;
        for i in 0..m {
            if w.contains(&i) {
                continue;
            }
            let ad = a.row(i).dot(&d.transpose());
            if ad < -1e-13 {
                let slack = a.row(i).dot(&z.transpose()) - b[i];
                let ratio = (slack / -ad).max(0.0);
                if ratio < alpha - 1e-15 {
                    alpha = ratio;
                    blocker = Some(i);
                }
            }
        }
        z += alpha * &d;
        if let Some(i) = blocker {
            w.push(i);
        }
    }

    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by_key(|&idx| w[idx]);
    let active: Vec<usize> = order.iter().map(|&idx| w[idx]).collect();
    let mu_sorted = DVector::from_iterator(w.len(), order.iter().map(|&idx| mu[idx]));
    CoreOut { z, mu: mu_sorted, nu, active, ill: *ill }
}

/// Dense bordered-KKT solve with a condition check; ill-conditioned or
/// singular systems are re-solved with Tikhonov damping and flagged.
fn solve_kkt(kkt: DMatrix<f64>, rhs: &DVector<f64>, n: usize, ill: &mut bool) -> DVector<f64> {
    let dim = kkt.nrows();
    let lu = kkt.clone().full_piv_lu();
    let u_diag: Vec<f64> = (0..dim).map(|i| lu.u()[(i, i)].abs()).collect();
    let max_p = u_diag.iter().cloned().fold(0.0, f64::max);
    let min_p = u_diag.iter().cloned().fold(f64::MAX, f64::min);
    if min_p > 0.0 && max_p / min_p < COND_LIMIT {
        if let Some(sol) = lu.solve(rhs) {
            return sol;
        }
    }
    *ill = true;
    let mut damped = kkt;
    for i in 0..dim {
        damped[(i, i)] += if i < n { DAMPING } else { -DAMPING };
    }
    damped
        .full_piv_lu()
        .solve(rhs)
        .unwrap_or_else(|| DVector::zeros(dim))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn unconstrained_projection() {
        let target = DVector::from_column_slice(&[3.0, 4.0]);
        let sol = solve(&QProblem::nearest_point(&target));
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.z, target, epsilon = 1e-10);
    }

    #[test]
    fn single_halfspace_matches_hand_solution() {
        // min ‖u − [−3,0]‖² s.t. [1,0]·u ≥ −1  →  [−1, 0]
        let mut qp = QProblem::nearest_point(&DVector::from_column_slice(&[-3.0, 0.0]));
        qp.push_ineq(&[1.0, 0.0], -1.0);
        let sol = solve(&qp);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.z, DVector::from_column_slice(&[-1.0, 0.0]), epsilon = 1e-10);
        assert_eq!(sol.active_set, vec![0]);
    }

    #[test]
    fn contradictory_halfspaces_are_infeasible() {
        let mut qp = QProblem::nearest_point(&DVector::zeros(2));
        qp.push_ineq(&[1.0, 0.0], 1.0);
        qp.push_ineq(&[-1.0, 0.0], 1.0);
        let sol = solve(&qp);
        assert_eq!(sol.status, QpStatus::Infeasible);
    }

    #[test]
    fn box_bounds_clip() {
        let mut qp = QProblem::nearest_point(&DVector::from_column_slice(&[3.0, -0.2]));
        qp.lower = Some(DVector::from_column_slice(&[-0.5, -0.5]));
        qp.upper = Some(DVector::from_column_slice(&[0.5, 0.5]));
        let sol = solve(&qp);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.z, DVector::from_column_slice(&[0.5, -0.2]), epsilon = 1e-10);
    }

    #[test]
    fn equality_and_inequality_mix() {
        // Closest point to [3,2] with z1 + z2 = 4, z >= 0 → [2.5, 1.5].
        let mut qp = QProblem::nearest_point(&DVector::from_column_slice(&[3.0, 2.0]));
        qp.push_eq(&[1.0, 1.0], 4.0);
        qp.lower = Some(DVector::from_column_slice(&[0.0, 0.0]));
        let sol = solve(&qp);
        assert_eq!(sol.status, QpStatus::Optimal);
        assert_relative_eq!(sol.z, DVector::from_column_slice(&[2.5, 1.5]), epsilon = 1e-9);
    }

    #[test]
    fn kkt_residuals_hold() {
        let mut qp = QProblem::nearest_point(&DVector::from_column_slice(&[1.0, -2.0, 0.5]));
        qp.push_ineq(&[1.0, 1.0, 0.0], 1.0);
        qp.push_ineq(&[0.0, 1.0, 1.0], 0.5);
        qp.push_eq(&[1.0, 0.0, -1.0], 0.25);
        let sol = solve(&qp);
        assert_eq!(sol.status, QpStatus::Optimal);
        let m = qp.a_in.nrows();
        let mut res = &qp.q * &sol.z + &qp.c;
        for i in 0..m {
            res -= sol.multipliers[i] * qp.a_in.row(i).transpose();
        }
        res -= sol.multipliers[m] * qp.a_eq.row(0).transpose();
        assert!(res.amax() <= 1e-7, "stationarity residual {}", res.amax());
        for i in 0..m {
            assert!(sol.multipliers[i] >= -MU_TOL);
            let slack = qp.a_in.row(i).dot(&sol.z.transpose()) - qp.b_in[i];
            assert!(slack >= -FEAS_TOL);
            assert!((sol.multipliers[i] * slack).abs() <= 1e-8);
        }
    }

    #[test]
    fn warm_start_reaches_same_optimum() {
        let mut solver = ActiveSetSolver::new();
        let mut qp = QProblem::nearest_point(&DVector::from_column_slice(&[-3.0, 0.0]));
        qp.push_ineq(&[1.0, 0.0], -1.0);
        let cold = solver.solve(&qp);
        // Same problem family, shifted target: warm start must land on the
        // exact optimum again.
        let mut qp2 = QProblem::nearest_point(&DVector::from_column_slice(&[-2.5, 0.4]));
        qp2.push_ineq(&[1.0, 0.0], -1.0);
        let warm = solver.solve(&qp2);
        assert_eq!(cold.status, QpStatus::Optimal);
        assert_relative_eq!(warm.z, DVector::from_column_slice(&[-1.0, 0.4]), epsilon = 1e-9);
    }
}
