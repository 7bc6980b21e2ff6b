//! Dense bounded-variable primal simplex with Bland's rule.
//!
//! Problems are stated as `min c^T x` subject to linear rows (`<=`, `>=`, `=`)
//! and per-variable bounds which may be infinite. Phase 1 drives artificial
//! variables to zero; phase 2 keeps them fixed at zero by an upper bound.

use thiserror::Error;

use crate::linalg::{dot, solve, Matrix};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("simplex iteration limit reached")]
    IterationLimit,
    #[error("invalid linear program: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug)]
pub struct LpSolution<S> {
    pub x: Vec<S>,
    pub objective: S,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct LinearProgram<S> {
    num_vars: usize,
    objective: Vec<S>,
    lower: Vec<S>,
    upper: Vec<S>,
    rows: Vec<Vec<S>>,
    kinds: Vec<RowKind>,
    rhs: Vec<S>,
}

#[derive(Clone, Copy, Debug)]
enum VarMap<S> {
    /// x = offset + y
    Shift(usize, S),
    /// x = offset - y
    Flip(usize, S),
    /// x = y_pos - y_neg
    Split(usize, usize),
}

impl<S: Scalar> LinearProgram<S> {
    /// New program over `n` variables, all nonnegative, zero objective.
    pub fn new(n: usize) -> Self {
        LinearProgram {
            num_vars: n,
            objective: vec![S::zero(); n],
            lower: vec![S::zero(); n],
            upper: vec![S::infinity(); n],
            rows: Vec::new(),
            kinds: Vec::new(),
            rhs: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn set_objective(&mut self, c: Vec<S>) {
        assert_eq!(c.len(), self.num_vars);
        self.objective = c;
    }

    pub fn set_cost(&mut self, j: usize, c: S) {
        self.objective[j] = c;
    }

    pub fn set_bounds(&mut self, j: usize, lo: S, hi: S) {
        self.lower[j] = lo;
        self.upper[j] = hi;
    }

    pub fn set_free(&mut self, j: usize) {
        self.set_bounds(j, S::neg_infinity(), S::infinity());
    }

    pub fn add_row(&mut self, coeffs: Vec<S>, kind: RowKind, rhs: S) {
        assert_eq!(coeffs.len(), self.num_vars);
        self.rows.push(coeffs);
        self.kinds.push(kind);
        self.rhs.push(rhs);
    }

    /// Adds a row from sparse `(index, coefficient)` pairs.
    pub fn add_sparse_row(&mut self, coeffs: &[(usize, S)], kind: RowKind, rhs: S) {
        let mut row = vec![S::zero(); self.num_vars];
        for &(j, v) in coeffs {
            row[j] += v;
        }
        self.add_row(row, kind, rhs);
    }

    pub fn solve(&self) -> Result<LpSolution<S>, LpError> {
        self.validate()?;
        let mut maps = Vec::with_capacity(self.num_vars);
        let mut ub: Vec<S> = Vec::new();
        let mut cost: Vec<S> = Vec::new();
        for j in 0..self.num_vars {
            let (lo, hi, c) = (self.lower[j], self.upper[j], self.objective[j]);
            if lo > hi {
                return Err(LpError::Infeasible);
            }
            if lo.is_finite() {
                maps.push(VarMap::Shift(ub.len(), lo));
                ub.push(hi - lo);
                cost.push(c);
            } else if hi.is_finite() {
                maps.push(VarMap::Flip(ub.len(), hi));
                ub.push(S::infinity());
                cost.push(-c);
            } else {
                maps.push(VarMap::Split(ub.len(), ub.len() + 1));
                ub.push(S::infinity());
                ub.push(S::infinity());
                cost.push(c);
                cost.push(-c);
            }
        }
        let ny = ub.len();
        let m = self.rows.len();
        let nslack = self.kinds.iter().filter(|k| **k != RowKind::Eq).count();
        let ncols = ny + nslack + m;
        let mut a = Matrix::zeros(m, ncols);
        let mut rhs = vec![S::zero(); m];
        let mut slack_col = ny;
        for i in 0..m {
            let mut r = self.rhs[i];
            for (j, map) in maps.iter().enumerate() {
                let v = self.rows[i][j];
                if v == S::zero() {
                    continue;
                }
                match *map {
                    VarMap::Shift(c, off) => {
                        a.set(i, c, v);
                        r -= v * off;
                    }
                    VarMap::Flip(c, off) => {
                        a.set(i, c, -v);
                        r -= v * off;
                    }
                    VarMap::Split(p, q) => {
                        a.set(i, p, v);
                        a.set(i, q, -v);
                    }
                }
            }
            match self.kinds[i] {
                RowKind::Le => {
                    a.set(i, slack_col, S::one());
                    slack_col += 1;
                }
                RowKind::Ge => {
                    a.set(i, slack_col, -S::one());
                    slack_col += 1;
                }
                RowKind::Eq => {}
            }
            if r < S::zero() {
                for v in a.row_mut(i) {
                    *v = -*v;
                }
                r = -r;
            }
            a.set(i, ny + nslack + i, S::one());
            rhs[i] = r;
        }
        ub.extend(std::iter::repeat_n(S::infinity(), nslack + m));
        cost.extend(std::iter::repeat_n(S::zero(), nslack + m));

        let mut tab = Tableau::new(a, rhs, ub);
        let art0 = ny + nslack;
        let max_iter = 100 * (m + ncols) + 1000;

        let mut phase1 = vec![S::zero(); ncols];
        for c in phase1.iter_mut().skip(art0) {
            *c = S::one();
        }
        let mut iters = tab.run(&phase1, max_iter)?;
        let infeas: S = (0..m)
            .filter(|&i| tab.basis[i] >= art0)
            .fold(S::zero(), |acc, i| acc + tab.xb[i].max(S::zero()));
        let rhs_scale = tab.rhs0.iter().fold(S::one(), |acc, &v| acc.max(v.abs()));
        if infeas > tab.feas_tol * rhs_scale {
            return Err(LpError::Infeasible);
        }
        for j in art0..ncols {
            tab.ub[j] = S::zero();
        }
        iters += tab.run(&cost, max_iter)?;

        let y = tab.values();
        let mut x = vec![S::zero(); self.num_vars];
        for (j, map) in maps.iter().enumerate() {
            x[j] = match *map {
                VarMap::Shift(c, off) => off + y[c],
                VarMap::Flip(c, off) => off - y[c],
                VarMap::Split(p, q) => y[p] - y[q],
            };
            // clean tiny bound violations left by round-off
            x[j] = x[j].max(self.lower[j]).min(self.upper[j]);
        }
        let objective = dot(&self.objective, &x);
        Ok(LpSolution {
            x,
            objective,
            iterations: iters,
        })
    }

    fn validate(&self) -> Result<(), LpError> {
        let finite_or_inf = |v: &S| !v.is_nan();
        if !self.objective.iter().all(|v| v.is_finite()) {
            return Err(LpError::Invalid("non-finite objective".into()));
        }
        if !self.lower.iter().chain(&self.upper).all(finite_or_inf) {
            return Err(LpError::Invalid("NaN bound".into()));
        }
        for (row, r) in self.rows.iter().zip(&self.rhs) {
            if !row.iter().all(|v| v.is_finite()) || !r.is_finite() {
                return Err(LpError::Invalid("non-finite row".into()));
            }
        }
        Ok(())
    }
}

struct Tableau<S> {
    a0: Matrix<S>,
    rhs0: Vec<S>,
    t: Matrix<S>,
    xb: Vec<S>,
    basis: Vec<usize>,
    is_basic: Vec<bool>,
    at_upper: Vec<bool>,
    ub: Vec<S>,
    pivot_tol: S,
    cost_tol: S,
    feas_tol: S,
}

impl<S: Scalar> Tableau<S> {
    fn new(a: Matrix<S>, rhs: Vec<S>, ub: Vec<S>) -> Self {
        let m = a.rows;
        let n = a.cols;
        let art0 = n - m;
        let basis: Vec<usize> = (art0..n).collect();
        let mut is_basic = vec![false; n];
        for &b in &basis {
            is_basic[b] = true;
        }
        let eps = S::epsilon();
        let root = eps.sqrt();
        Tableau {
            t: a.clone(),
            a0: a,
            xb: rhs.clone(),
            rhs0: rhs,
            basis,
            is_basic,
            at_upper: vec![false; n],
            ub,
            pivot_tol: (root * S::c(1e-3)).max(S::c(1e-11)),
            cost_tol: (root * S::c(1e-2)).max(S::c(1e-10)),
            feas_tol: S::c(1e-9).max(eps * S::c(100.0)),
        }
    }

    fn run(&mut self, cost: &[S], max_iter: usize) -> Result<usize, LpError> {
        let m = self.t.rows;
        let n = self.t.cols;
        let mut iters = 0;
        loop {
            if iters >= max_iter {
                return Err(LpError::IterationLimit);
            }
            // Bland: first eligible column
            let mut enter = None;
            for j in 0..n {
                if self.is_basic[j] || self.ub[j] <= S::zero() {
                    continue;
                }
                let mut d = cost[j];
                for i in 0..m {
                    let tij = self.t.get(i, j);
                    if tij != S::zero() {
                        d -= cost[self.basis[i]] * tij;
                    }
                }
                let scale = S::one().max(cost[j].abs());
                if !self.at_upper[j] && d < -self.cost_tol * scale {
                    enter = Some((j, S::one()));
                    break;
                }
                if self.at_upper[j] && d > self.cost_tol * scale {
                    enter = Some((j, -S::one()));
                    break;
                }
            }
            let Some((j, dir)) = enter else {
                self.refresh_basics();
                return Ok(iters);
            };
            iters += 1;

            let mut theta = self.ub[j];
            let mut leave: Option<(usize, bool)> = None;
            for i in 0..m {
                let alpha = dir * self.t.get(i, j);
                let (lim, to_upper) = if alpha > self.pivot_tol {
                    ((self.xb[i].max(S::zero())) / alpha, false)
                } else if alpha < -self.pivot_tol {
                    let u = self.ub[self.basis[i]];
                    if !u.is_finite() {
                        continue;
                    }
                    (((u - self.xb[i]).max(S::zero())) / (-alpha), true)
                } else {
                    continue;
                };
                let better = match leave {
                    _ if lim < theta => true,
                    Some((r, _)) if lim == theta => self.basis[i] < self.basis[r],
                    None if lim == theta => true,
                    _ => false,
                };
                if better {
                    theta = lim;
                    leave = Some((i, to_upper));
                }
            }
            if !theta.is_finite() {
                return Err(LpError::Unbounded);
            }
            for i in 0..m {
                let tij = self.t.get(i, j);
                if tij != S::zero() {
                    self.xb[i] -= dir * theta * tij;
                }
            }
            match leave {
                None => {
                    // bound flip
                    self.at_upper[j] = !self.at_upper[j];
                }
                Some((r, to_upper)) => {
                    let entering_value = if dir > S::zero() {
                        theta
                    } else {
                        self.ub[j] - theta
                    };
                    let old = self.basis[r];
                    self.is_basic[old] = false;
                    self.at_upper[old] = to_upper;
                    self.basis[r] = j;
                    self.is_basic[j] = true;
                    self.at_upper[j] = false;
                    self.xb[r] = entering_value;
                    self.pivot(r, j);
                }
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let m = self.t.rows;
        let n = self.t.cols;
        let p = self.t.get(r, j);
        for k in 0..n {
            let v = self.t.get(r, k) / p;
            self.t.set(r, k, v);
        }
        let prow: Vec<S> = self.t.row(r).to_vec();
        for i in 0..m {
            if i == r {
                continue;
            }
            let f = self.t.get(i, j);
            if f == S::zero() {
                continue;
            }
            let row = self.t.row_mut(i);
            for k in 0..n {
                row[k] -= f * prow[k];
            }
            row[j] = S::zero();
        }
    }

    /// Recomputes basic values from the original matrix to shed round-off.
    fn refresh_basics(&mut self) {
        let m = self.t.rows;
        if m == 0 {
            return;
        }
        let n = self.t.cols;
        let mut r = self.rhs0.clone();
        for k in 0..n {
            if !self.is_basic[k] && self.at_upper[k] {
                let u = self.ub[k];
                for (i, ri) in r.iter_mut().enumerate() {
                    *ri -= self.a0.get(i, k) * u;
                }
            }
        }
        let mut b = Matrix::zeros(m, m);
        for (c, &k) in self.basis.iter().enumerate() {
            for i in 0..m {
                b.set(i, c, self.a0.get(i, k));
            }
        }
        if let Some(x) = solve(&b, &r, S::epsilon() * S::c(16.0)) {
            if x.iter().all(|v| v.is_finite()) {
                self.xb = x;
            }
        }
    }

    fn values(&self) -> Vec<S> {
        let n = self.t.cols;
        let mut y = vec![S::zero(); n];
        for k in 0..n {
            if !self.is_basic[k] && self.at_upper[k] {
                y[k] = self.ub[k];
            }
        }
        for (i, &k) in self.basis.iter().enumerate() {
            let mut v = self.xb[i].max(S::zero());
            if self.ub[k].is_finite() {
                v = v.min(self.ub[k]);
            }
            y[k] = v;
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn textbook_max_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(vec![-3.0, -5.0]);
        lp.add_row(vec![1.0, 0.0], RowKind::Le, 4.0);
        lp.add_row(vec![0.0, 2.0], RowKind::Le, 12.0);
        lp.add_row(vec![3.0, 2.0], RowKind::Le, 18.0);
        let s = lp.solve().unwrap();
        assert!(close(s.x[0], 2.0) && close(s.x[1], 6.0));
        assert!(close(s.objective, -36.0));
    }

    #[test]
    fn free_and_bounded_variables() {
        // min x - y, x in [-2, 3] free-ish, y <= 5 (no lower), x + y >= -10
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_objective(vec![1.0, -1.0]);
        lp.set_bounds(0, -2.0, 3.0);
        lp.set_bounds(1, f64::NEG_INFINITY, 5.0);
        lp.add_row(vec![1.0, 1.0], RowKind::Ge, -10.0);
        let s = lp.solve().unwrap();
        assert!(close(s.x[0], -2.0) && close(s.x[1], 5.0));
    }

    #[test]
    fn equality_with_free_vars() {
        let mut lp = LinearProgram::<f64>::new(2);
        lp.set_free(0);
        lp.set_free(1);
        lp.set_objective(vec![1.0, 1.0]);
        lp.add_row(vec![1.0, -1.0], RowKind::Eq, 1.0);
        lp.add_row(vec![1.0, 0.0], RowKind::Ge, -3.0);
        lp.add_row(vec![0.0, 1.0], RowKind::Ge, -4.0);
        let s = lp.solve().unwrap();
        assert!(close(s.x[0], -3.0) && close(s.x[1], -4.0));
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let mut lp = LinearProgram::<f64>::new(1);
        lp.add_row(vec![1.0], RowKind::Le, -1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Infeasible);

        let mut lp = LinearProgram::<f64>::new(1);
        lp.set_objective(vec![-1.0]);
        lp.add_row(vec![-1.0], RowKind::Le, 1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Unbounded);

        let mut lp = LinearProgram::<f64>::new(1);
        lp.set_bounds(0, 2.0, 1.0);
        assert_eq!(lp.solve().unwrap_err(), LpError::Infeasible);
    }

    #[test]
    fn degenerate_problem_terminates() {
        // classic cycling example (Beale) under Dantzig's rule
        let mut lp = LinearProgram::<f64>::new(4);
        lp.set_objective(vec![-0.75, 150.0, -0.02, 6.0]);
        lp.add_row(vec![0.25, -60.0, -0.04, 9.0], RowKind::Le, 0.0);
        lp.add_row(vec![0.5, -90.0, -0.02, 3.0], RowKind::Le, 0.0);
        lp.add_row(vec![0.0, 0.0, 1.0, 0.0], RowKind::Le, 1.0);
        let s = lp.solve().unwrap();
        assert!(close(s.objective, -0.05));
    }

    #[test]
    fn single_precision_instance() {
        let mut lp = LinearProgram::<f32>::new(2);
        lp.set_objective(vec![-1.0, -1.0]);
        lp.add_row(vec![1.0, 2.0], RowKind::Le, 4.0);
        lp.add_row(vec![3.0, 1.0], RowKind::Le, 6.0);
        let s = lp.solve().unwrap();
        assert!((s.x[0] - 1.6).abs() < 1e-5 && (s.x[1] - 1.2).abs() < 1e-5);
    }
}
