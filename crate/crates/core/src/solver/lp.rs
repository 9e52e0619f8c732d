//! Dense two-phase simplex over free variables.

use nalgebra::{DMatrix, DVector};

use super::{SolveResult, SolveStatus};

/// `min cᵀx` subject to `A_eq x = b_eq`, `A_ineq x ≥ b_ineq`, `x` free.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub c: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
}

impl LinearProgram {
    pub fn new(n: usize) -> Self {
        Self {
            c: DVector::zeros(n),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }
}

const PIVOT_TOL: f64 = 1e-10;
const COST_TOL: f64 = 1e-10;
/// Degenerate pivots tolerated under Dantzig's rule before switching to Bland's.
const DEGENERATE_SWITCH: usize = 50;

struct Tableau {
    rows: usize,
    cols: usize,
    /// `rows + 1` rows (last is the reduced-cost row), `cols + 1` columns
    /// (last is the right-hand side).
    t: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.t[r * self.width + c]
    }

    fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.t[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.width;
        let p = self.at(r, c);
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.at(i, c);
            if f == 0.0 {
                continue;
            }
            for j in 0..w {
                let v = self.t[r * w + j];
                self.t[i * w + j] -= f * v;
            }
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations on the current cost row. Columns with
    /// `allowed[j] == false` never enter.
    fn optimize(&mut self, allowed: &[bool], max_iters: usize) -> SolveStatus {
        let mut degenerate_run = 0usize;
        let mut bland = false;
        for _ in 0..max_iters {
            let cost_row = self.rows;
            let mut enter = None;
            let mut best = -COST_TOL;
            for j in 0..self.cols {
                if !allowed[j] {
                    continue;
                }
                let d = self.at(cost_row, j);
                if d < -COST_TOL {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if d < best {
                        best = d;
                        enter = Some(j);
                    }
                }
            }
            let Some(c) = enter else {
                return SolveStatus::Optimal;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    match leave {
                        None => leave = Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12
                                || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li])
                            {
                                leave = Some((i, ratio));
                            }
                        }
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return SolveStatus::Unbounded;
            };
            if ratio <= 1e-12 {
                degenerate_run += 1;
                if degenerate_run > DEGENERATE_SWITCH {
                    bland = true;
                }
            } else {
                degenerate_run = 0;
            }
            self.pivot(r, c);
        }
        SolveStatus::NumericalFailure
    }
}

/// Solves a linear program with the two-phase simplex method.
pub fn solve_lp(lp: &LinearProgram) -> SolveResult {
    let n = lp.dim();
    let me = lp.a_eq.nrows();
    let mi = lp.a_ineq.nrows();
    let m = me + mi;
    // Columns: x+ (n), x- (n), surplus (mi), artificial (m).
    let n_struct = 2 * n + mi;
    let cols = n_struct + m;
    let width = cols + 1;
    let mut tab = Tableau {
        rows: m,
        cols,
        t: vec![0.0; (m + 1) * width],
        basis: vec![0; m],
        width,
    };
    for r in 0..m {
        let (row, b) = if r < me {
            (lp.a_eq.row(r), lp.b_eq[r])
        } else {
            (lp.a_ineq.row(r - me), lp.b_ineq[r - me])
        };
        let sign = if b < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            *tab.at_mut(r, j) = sign * row[j];
            *tab.at_mut(r, n + j) = -sign * row[j];
        }
        if r >= me {
            *tab.at_mut(r, 2 * n + (r - me)) = -sign;
        }
        *tab.at_mut(r, n_struct + r) = 1.0;
        *tab.at_mut(r, cols) = sign * b;
        tab.basis[r] = n_struct + r;
    }
    let max_iters = 50 * (m + cols) + 1000;

    // Phase 1: minimise the sum of artificials.
    for j in 0..width {
        let s: f64 = (0..m).map(|r| tab.at(r, j)).sum();
        *tab.at_mut(m, j) = if j >= n_struct && j < cols { 0.0 } else { -s };
    }
    let all = vec![true; cols];
    match tab.optimize(&all, max_iters) {
        SolveStatus::Optimal => {}
        _ => return SolveResult::failed(SolveStatus::NumericalFailure, n),
    }
    let infeas = -tab.at(m, cols);
    let b_scale = 1.0
        + lp.b_eq.iter().chain(lp.b_ineq.iter()).fold(0.0f64, |a, v| a.max(v.abs()));
    if infeas > 1e-9 * b_scale {
        return SolveResult::failed(SolveStatus::Infeasible, n);
    }
    // Drive remaining artificials out of the basis where possible.
    for r in 0..m {
        if tab.basis[r] >= n_struct {
            if let Some(c) = (0..n_struct).find(|&j| tab.at(r, j).abs() > 1e-8) {
                tab.pivot(r, c);
            }
        }
    }

    // Phase 2.
    let mut cost = vec![0.0; width];
    for j in 0..n {
        cost[j] = lp.c[j];
        cost[n + j] = -lp.c[j];
    }
    for r in 0..m {
        let b = tab.basis[r];
        let cb = cost[b];
        if cb != 0.0 {
            for j in 0..width {
                cost[j] -= cb * tab.at(r, j);
            }
        }
    }
    for j in 0..width {
        *tab.at_mut(m, j) = cost[j];
    }
    let allowed: Vec<bool> = (0..cols).map(|j| j < n_struct).collect();
    let status = tab.optimize(&allowed, max_iters);
    if status != SolveStatus::Optimal {
        return SolveResult::failed(status, n);
    }
    let mut x = DVector::zeros(n);
    for r in 0..m {
        let b = tab.basis[r];
        let v = tab.rhs(r);
        if b < n {
            x[b] += v;
        } else if b < 2 * n {
            x[b - n] -= v;
        }
    }
    let objective = lp.c.dot(&x);
    SolveResult {
        status: SolveStatus::Optimal,
        x,
        objective,
    }
}
