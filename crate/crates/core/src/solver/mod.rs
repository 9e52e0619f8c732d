//! Small dense LP and QP solvers.

mod lp;
mod qp;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub use lp::{solve_lp, LinearProgram};
pub use qp::{solve_qp, QuadraticProgram, HESSIAN_REGULARIZATION};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub status: SolveStatus,
    pub x: DVector<f64>,
    pub objective: f64,
}

impl SolveResult {
    pub(crate) fn failed(status: SolveStatus, n: usize) -> Self {
        Self {
            status,
            x: DVector::zeros(n),
            objective: f64::NAN,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("solver breakdown ({0:?})")]
    NumericalFailure(SolveStatus),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    Infeasible,
}

/// Decides whether `A_eq x = b_eq`, `A_ineq x ≥ b_ineq` admits a point where
/// every row listed in `strict_rows` holds with margin at least `sigma`.
///
/// A phase-1 LP maximises the smallest strict-row margin (capped at 1).
pub fn solve_lp_feasibility(
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_ineq: &DMatrix<f64>,
    b_ineq: &DVector<f64>,
    strict_rows: &[usize],
    sigma: f64,
) -> Result<Feasibility, SolverError> {
    let n = a_eq.ncols().max(a_ineq.ncols());
    if (a_eq.nrows() > 0 && a_eq.ncols() != n)
        || (a_ineq.nrows() > 0 && a_ineq.ncols() != n)
        || a_eq.nrows() != b_eq.len()
        || a_ineq.nrows() != b_ineq.len()
    {
        return Err(SolverError::DimensionMismatch(format!(
            "eq {}x{} / {}, ineq {}x{} / {}",
            a_eq.nrows(),
            a_eq.ncols(),
            b_eq.len(),
            a_ineq.nrows(),
            a_ineq.ncols(),
            b_ineq.len()
        )));
    }
    if let Some(&bad) = strict_rows.iter().find(|&&r| r >= a_ineq.nrows()) {
        return Err(SolverError::DimensionMismatch(format!(
            "strict row {bad} out of range"
        )));
    }
    let has_margin = !strict_rows.is_empty();
    let nv = if has_margin { n + 1 } else { n };
    let mut lp = LinearProgram::new(nv);
    lp.a_eq = DMatrix::zeros(a_eq.nrows(), nv);
    if a_eq.nrows() > 0 {
        lp.a_eq.view_mut((0, 0), (a_eq.nrows(), n)).copy_from(a_eq);
    }
    lp.b_eq = b_eq.clone();
    let extra = usize::from(has_margin);
    let mi = a_ineq.nrows();
    lp.a_ineq = DMatrix::zeros(mi + extra, nv);
    lp.b_ineq = DVector::zeros(mi + extra);
    if mi > 0 {
        lp.a_ineq.view_mut((0, 0), (mi, n)).copy_from(a_ineq);
        lp.b_ineq.rows_mut(0, mi).copy_from(b_ineq);
    }
    if has_margin {
        for &r in strict_rows {
            lp.a_ineq[(r, n)] = -1.0;
        }
        // margin ≤ 1
        lp.a_ineq[(mi, n)] = -1.0;
        lp.b_ineq[mi] = -1.0;
        lp.c[n] = -1.0;
    }
    let res = solve_lp(&lp);
    match res.status {
        SolveStatus::Optimal => {
            if !has_margin || res.x[n] >= sigma {
                Ok(Feasibility::Feasible)
            } else {
                Ok(Feasibility::Infeasible)
            }
        }
        SolveStatus::Infeasible => Ok(Feasibility::Infeasible),
        s => Err(SolverError::NumericalFailure(s)),
    }
}
