//! Dense convex QP: equality constraints are eliminated through an SVD null
//! space, the remaining inequality-constrained problem is solved with the
//! Goldfarb–Idnani dual active-set method.

use nalgebra::{DMatrix, DVector};

use super::{SolveResult, SolveStatus};

/// Ridge added to the Hessian before solving.
pub const HESSIAN_REGULARIZATION: f64 = 1e-9;

/// `min ½xᵀHx + gᵀx` subject to `A_eq x = b_eq`, `A_ineq x ≥ b_ineq`.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
}

impl QuadraticProgram {
    /// Unconstrained zero objective over `n` variables.
    pub fn new(n: usize) -> Self {
        Self {
            h: DMatrix::zeros(n, n),
            g: DVector::zeros(n),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x)
    }

    /// Checks dimensions and symmetry of `H` (within 1e-9).
    pub fn is_consistent(&self) -> bool {
        let n = self.dim();
        if self.h.nrows() != n || self.h.ncols() != n {
            return false;
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return false;
        }
        if self.a_ineq.ncols() != n || self.a_ineq.nrows() != self.b_ineq.len() {
            return false;
        }
        (0..n).all(|i| (0..i).all(|j| (self.h[(i, j)] - self.h[(j, i)]).abs() <= 1e-9))
    }
}

/// Particular solution and orthonormal null-space basis of `A x = b`.
/// Returns `None` when the system is inconsistent beyond `tol`.
fn eliminate_equalities(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = a.ncols();
    let m = a.nrows();
    if m == 0 {
        return Some((DVector::zeros(n), DMatrix::identity(n, n)));
    }
    // Pad to at least n rows so the SVD returns a full right basis.
    let rows = m.max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (m, n)).copy_from(a);
    let svd = padded.svd(true, true);
    let u = svd.u.expect("requested U");
    let vt = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.iter().fold(0.0f64, |x, s| x.max(*s));
    let cutoff = 1e-10 * smax.max(1.0);
    let mut x0 = DVector::zeros(n);
    let mut null_cols = Vec::new();
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            let coef = u.column(i).rows(0, m).dot(b) / s;
            x0 += vt.row(i).transpose() * coef;
        } else {
            null_cols.push(i);
        }
    }
    let residual = (a * &x0 - b).amax();
    if residual > tol {
        return None;
    }
    let mut z = DMatrix::zeros(n, null_cols.len());
    for (k, &i) in null_cols.iter().enumerate() {
        z.set_column(k, &vt.row(i).transpose());
    }
    Some((x0, z))
}

/// Goldfarb–Idnani on `min ½yᵀQy + cᵀy  s.t.  N y ≥ d` with `Q` positive
/// definite. Rows of `N` are unit length.
fn dual_active_set(
    q: &DMatrix<f64>,
    c: &DVector<f64>,
    nmat: &DMatrix<f64>,
    d: &DVector<f64>,
    viol_tol: f64,
) -> Result<DVector<f64>, SolveStatus> {
    let k = q.nrows();
    let m = nmat.nrows();
    let chol = q
        .clone()
        .cholesky()
        .ok_or(SolveStatus::NumericalFailure)?;
    let mut y = -chol.solve(c);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let qscale = q.diagonal().amax().max(1e-300);
    let max_iters = 30 * (m + k) + 100;
    let mut iters = 0usize;

    let slack = |y: &DVector<f64>, i: usize| nmat.row(i).transpose().dot(y) - d[i];

    loop {
        // Most violated inactive constraint.
        let mut p = None;
        let mut worst = -viol_tol;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let s = slack(&y, i);
            if s < worst {
                worst = s;
                p = Some(i);
            }
        }
        let Some(p) = p else {
            return Ok(y);
        };
        let np: DVector<f64> = nmat.row(p).transpose();
        let mut up = 0.0;
        loop {
            iters += 1;
            if iters > max_iters {
                return Err(SolveStatus::NumericalFailure);
            }
            let qa = active.len();
            let (z, r) = if qa == 0 {
                (chol.solve(&np), DVector::zeros(0))
            } else {
                let dim = k + qa;
                let mut kkt = DMatrix::zeros(dim, dim);
                kkt.view_mut((0, 0), (k, k)).copy_from(q);
                for (j, &ai) in active.iter().enumerate() {
                    for l in 0..k {
                        kkt[(l, k + j)] = nmat[(ai, l)];
                        kkt[(k + j, l)] = nmat[(ai, l)];
                    }
                }
                let mut rhs = DVector::zeros(dim);
                rhs.rows_mut(0, k).copy_from(&np);
                let sol = kkt
                    .lu()
                    .solve(&rhs)
                    .ok_or(SolveStatus::NumericalFailure)?;
                (sol.rows(0, k).into_owned(), sol.rows(k, qa).into_owned())
            };
            // Partial (dual) step: keep active multipliers non-negative.
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for j in 0..qa {
                if r[j] > 1e-14 {
                    let ratio = u[j] / r[j];
                    if ratio < t1 {
                        t1 = ratio;
                        drop = Some(j);
                    }
                }
            }
            // Full (primal) step: make constraint p active.
            let zn = z.dot(&np);
            let t2 = if zn > 1e-13 / qscale {
                -slack(&y, p) / zn
            } else {
                f64::INFINITY
            };
            if t1.is_infinite() && t2.is_infinite() {
                return Err(SolveStatus::Infeasible);
            }
            if t2.is_infinite() {
                for j in 0..qa {
                    u[j] -= t1 * r[j];
                }
                up += t1;
                let jd = drop.expect("finite t1 has a blocking index");
                active.remove(jd);
                u.remove(jd);
                continue;
            }
            let t = t1.min(t2);
            y += &z * t;
            for j in 0..qa {
                u[j] -= t * r[j];
            }
            up += t;
            if t2 <= t1 {
                active.push(p);
                u.push(up);
                break;
            }
            let jd = drop.expect("finite t1 has a blocking index");
            active.remove(jd);
            u.remove(jd);
        }
    }
}

/// Solves a convex QP. `tol_feas` bounds the equality residual and the
/// inequality violation of an `Optimal` answer. A ridge of
/// [`HESSIAN_REGULARIZATION`] is added to `H`.
pub fn solve_qp(p: &QuadraticProgram, tol_feas: f64) -> SolveResult {
    let n = p.dim();
    if !p.is_consistent() {
        return SolveResult::failed(SolveStatus::NumericalFailure, n);
    }
    let mut h = p.h.clone();
    for i in 0..n {
        h[(i, i)] += HESSIAN_REGULARIZATION;
    }
    let Some((x0, z)) = eliminate_equalities(&p.a_eq, &p.b_eq, tol_feas) else {
        return SolveResult::failed(SolveStatus::Infeasible, n);
    };
    let k = z.ncols();

    // Reduced inequality rows, normalised; empty rows are checked directly.
    let ax0 = &p.a_ineq * &x0;
    let nfull = &p.a_ineq * &z;
    let mut rows: Vec<usize> = Vec::new();
    let mut norms: Vec<f64> = Vec::new();
    for i in 0..p.a_ineq.nrows() {
        let rhs = p.b_ineq[i] - ax0[i];
        let nrm = nfull.row(i).norm();
        if nrm <= 1e-12 * (1.0 + p.a_ineq.row(i).norm()) {
            if rhs > tol_feas {
                return SolveResult::failed(SolveStatus::Infeasible, n);
            }
        } else {
            rows.push(i);
            norms.push(nrm);
        }
    }

    let y = if k == 0 {
        DVector::zeros(0)
    } else {
        let mut qmat = z.transpose() * &h * &z;
        qmat = (&qmat + qmat.transpose()) * 0.5;
        let cvec = z.transpose() * (&h * &x0 + &p.g);
        let mut nmat = DMatrix::zeros(rows.len(), k);
        let mut d = DVector::zeros(rows.len());
        for (r, (&i, &nrm)) in rows.iter().zip(&norms).enumerate() {
            nmat.set_row(r, &(nfull.row(i) / nrm));
            d[r] = (p.b_ineq[i] - ax0[i]) / nrm;
        }
        let viol_tol = (1e-3 * tol_feas).min(1e-9);
        match dual_active_set(&qmat, &cvec, &nmat, &d, viol_tol) {
            Ok(y) => y,
            Err(status) => return SolveResult::failed(status, n),
        }
    };
    let x = &x0 + &z * &y;

    let eq_res = if p.a_eq.nrows() > 0 {
        (&p.a_eq * &x - &p.b_eq).amax()
    } else {
        0.0
    };
    let ineq_viol = (0..p.a_ineq.nrows())
        .map(|i| p.b_ineq[i] - p.a_ineq.row(i).transpose().dot(&x))
        .fold(0.0f64, f64::max);
    if eq_res > tol_feas || ineq_viol > tol_feas || x.iter().any(|v| !v.is_finite()) {
        return SolveResult {
            status: SolveStatus::NumericalFailure,
            objective: p.objective(&x),
            x,
        };
    }
    SolveResult {
        status: SolveStatus::Optimal,
        objective: p.objective(&x),
        x,
    }
}
