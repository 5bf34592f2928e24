//! Dense revised simplex for small linear programs in the form
//! `min cᵀx  s.t.  A x {=,≤} b,  x ≥ 0`.
//!
//! Two phases with artificial variables; Bland's rule for both the entering
//! and the leaving variable, so degenerate problems terminate.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowKind {
    Eq,
    Le,
}

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {0:.3e})")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("iteration limit of {0} pivots reached")]
    IterationLimit(usize),
    #[error("malformed linear program: {0}")]
    Malformed(String),
}

/// Sparse column storage; rows are given by their kind and right-hand side.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    pub columns: Vec<Vec<(usize, f64)>>,
    pub rhs: Vec<f64>,
    pub kinds: Vec<RowKind>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Row duals `y` with `c − Aᵀy ≥ 0`; `y_i ≤ 0` on `≤` rows.
    pub duals: Vec<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub pivots: usize,
}

impl LinearProgram {
    pub fn new(num_rows: usize) -> Self {
        Self { rhs: vec![0.0; num_rows], kinds: vec![RowKind::Eq; num_rows], ..Default::default() }
    }

    pub fn num_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn add_column(&mut self, cost: f64, entries: Vec<(usize, f64)>) -> usize {
        self.cost.push(cost);
        self.columns.push(entries);
        self.columns.len() - 1
    }

    pub fn solve(&self) -> Result<LpSolution, LpError> {
        Simplex::build(self)?.run(self)
    }
}

const PIVOT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, PartialEq)]
enum Var {
    Structural(usize),
    Slack(usize),
    Artificial(usize),
}

struct Simplex {
    m: usize,
    /// Columns of the standardized problem (structural, slack, artificial).
    cols: Vec<Vec<(usize, f64)>>,
    vars: Vec<Var>,
    /// `+1` or `−1` per row; rows are negated so that `b ≥ 0`.
    sign: Vec<f64>,
    b: Vec<f64>,
    basis: Vec<usize>,
    in_basis: Vec<bool>,
    binv: Vec<f64>,
    xb: Vec<f64>,
    pivots: usize,
    since_refactor: usize,
}

impl Simplex {
    fn build(lp: &LinearProgram) -> Result<Self, LpError> {
        let m = lp.num_rows();
        if lp.kinds.len() != m || lp.cost.len() != lp.columns.len() {
            return Err(LpError::Malformed("dimension mismatch".into()));
        }
        if lp.rhs.iter().chain(&lp.cost).any(|v| !v.is_finite()) {
            return Err(LpError::Malformed("non-finite data".into()));
        }
        let sign: Vec<f64> = lp.rhs.iter().map(|&b| if b < 0.0 { -1.0 } else { 1.0 }).collect();
        let mut cols = Vec::new();
        let mut vars = Vec::new();
        for (j, col) in lp.columns.iter().enumerate() {
            if col.iter().any(|&(i, v)| i >= m || !v.is_finite()) {
                return Err(LpError::Malformed(format!("column {j} has a bad entry")));
            }
            cols.push(col.iter().map(|&(i, v)| (i, v * sign[i])).collect());
            vars.push(Var::Structural(j));
        }
        let mut basis = vec![usize::MAX; m];
        for i in 0..m {
            if lp.kinds[i] == RowKind::Le {
                cols.push(vec![(i, sign[i])]);
                vars.push(Var::Slack(i));
                if sign[i] > 0.0 {
                    basis[i] = cols.len() - 1;
                }
            }
        }
        for (i, slot) in basis.iter_mut().enumerate() {
            if *slot == usize::MAX {
                cols.push(vec![(i, 1.0)]);
                vars.push(Var::Artificial(i));
                *slot = cols.len() - 1;
            }
        }
        let b: Vec<f64> = lp.rhs.iter().zip(&sign).map(|(b, s)| b * s).collect();
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0;
        }
        let mut in_basis = vec![false; cols.len()];
        for &j in &basis {
            in_basis[j] = true;
        }
        Ok(Self {
            m,
            cols,
            vars,
            sign,
            xb: b.clone(),
            b,
            basis,
            in_basis,
            binv,
            pivots: 0,
            since_refactor: 0,
        })
    }

    fn is_artificial(&self, j: usize) -> bool {
        matches!(self.vars[j], Var::Artificial(_))
    }

    /// `y = c_Bᵀ B⁻¹`.
    fn duals(&self, cost: &[f64]) -> Vec<f64> {
        let m = self.m;
        let mut y = vec![0.0; m];
        for (r, &j) in self.basis.iter().enumerate() {
            let c = cost[j];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yi, bi) in y.iter_mut().zip(row) {
                    *yi += c * bi;
                }
            }
        }
        y
    }

    fn reduced_cost(&self, cost: &[f64], y: &[f64], j: usize) -> f64 {
        cost[j] - self.cols[j].iter().map(|&(i, v)| y[i] * v).sum::<f64>()
    }

    /// `B⁻¹ a_j`.
    fn ftran(&self, j: usize) -> Vec<f64> {
        let m = self.m;
        let mut u = vec![0.0; m];
        for &(i, v) in &self.cols[j] {
            for (r, ur) in u.iter_mut().enumerate() {
                *ur += self.binv[r * m + i] * v;
            }
        }
        u
    }

    fn pivot(&mut self, r: usize, q: usize, u: &[f64]) {
        let m = self.m;
        let theta = self.xb[r] / u[r];
        let inv = 1.0 / u[r];
        let (before, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, after) = rest.split_at_mut(m);
        for v in pivot_row.iter_mut() {
            *v *= inv;
        }
        for (i, &ui) in u.iter().enumerate() {
            if i == r || ui == 0.0 {
                continue;
            }
            let row = if i < r {
                &mut before[i * m..(i + 1) * m]
            } else {
                &mut after[(i - r - 1) * m..(i - r) * m]
            };
            for (a, p) in row.iter_mut().zip(pivot_row.iter()) {
                *a -= ui * p;
            }
            self.xb[i] -= theta * ui;
            if self.xb[i] < 0.0 && self.xb[i] > -1e-12 {
                self.xb[i] = 0.0;
            }
        }
        self.xb[r] = theta;
        self.in_basis[self.basis[r]] = false;
        self.in_basis[q] = true;
        self.basis[r] = q;
        self.pivots += 1;
        self.since_refactor += 1;
        if self.since_refactor >= self.m.max(50) {
            self.refactor();
        }
    }

    /// Recomputes `B⁻¹` and `x_B` from scratch by Gauss-Jordan elimination.
    fn refactor(&mut self) {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (r, &j) in self.basis.iter().enumerate() {
            for &(i, v) in &self.cols[j] {
                a[i * m + r] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&x, &y| a[x * m + c].abs().total_cmp(&a[y * m + c].abs()))
                .unwrap();
            if a[p * m + c].abs() < 1e-14 {
                // Keep the product-form inverse if the basis looks singular.
                self.since_refactor = 0;
                return;
            }
            if p != c {
                for k in 0..m {
                    a.swap(p * m + k, c * m + k);
                    inv.swap(p * m + k, c * m + k);
                }
            }
            let d = 1.0 / a[c * m + c];
            for k in 0..m {
                a[c * m + k] *= d;
                inv[c * m + k] *= d;
            }
            for i in 0..m {
                let f = a[i * m + c];
                if i != c && f != 0.0 {
                    for k in 0..m {
                        a[i * m + k] -= f * a[c * m + k];
                        inv[i * m + k] -= f * inv[c * m + k];
                    }
                }
            }
        }
        self.binv = inv;
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            let v: f64 = row.iter().zip(&self.b).map(|(x, b)| x * b).sum();
            self.xb[r] = if v < 0.0 && v > -1e-12 { 0.0 } else { v };
        }
        self.since_refactor = 0;
    }

    /// Bland's-rule iterations for `cost`; artificials never enter.
    fn optimize(&mut self, cost: &[f64], limit: usize) -> Result<(), LpError> {
        let scale = cost.iter().fold(0.0f64, |a, c| a.max(c.abs())).max(1.0);
        let tol = 1e-11 * scale;
        loop {
            if self.pivots >= limit {
                return Err(LpError::IterationLimit(limit));
            }
            let y = self.duals(cost);
            let entering = (0..self.cols.len()).find(|&j| {
                !self.is_artificial(j)
                    && !self.in_basis[j]
                    && self.reduced_cost(cost, &y, j) < -tol
            });
            let Some(q) = entering else { return Ok(()) };
            let u = self.ftran(q);
            let mut leave: Option<(usize, f64)> = None;
            for (r, &ur) in u.iter().enumerate() {
                if ur <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.xb[r].max(0.0) / ur;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                        if ratio < lratio && !tie
                            || tie && self.basis[r] < self.basis[lr]
                        {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else { return Err(LpError::Unbounded) };
            self.pivot(r, q, &u);
        }
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpSolution, LpError> {
        let n = self.cols.len();
        let limit = 50 * (n + self.m) + 1000;
        let phase1: Vec<f64> =
            (0..n).map(|j| if self.is_artificial(j) { 1.0 } else { 0.0 }).collect();
        let bscale = self.b.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1.0);
        if self.basis.iter().any(|&j| self.is_artificial(j)) {
            self.optimize(&phase1, limit)?;
            self.refactor();
            let residual: f64 = self
                .basis
                .iter()
                .zip(&self.xb)
                .filter(|(&j, _)| self.is_artificial(j))
                .map(|(_, &x)| x)
                .sum();
            if residual > 1e-9 * bscale {
                return Err(LpError::Infeasible(residual));
            }
            self.drive_out_artificials();
        }
        let mut cost = vec![0.0; n];
        for (j, v) in self.vars.iter().enumerate() {
            if let Var::Structural(s) = *v {
                cost[j] = lp.cost[s];
            }
        }
        self.optimize(&cost, limit)?;
        self.refactor();

        let mut x = vec![0.0; lp.columns.len()];
        for (r, &j) in self.basis.iter().enumerate() {
            if let Var::Structural(s) = self.vars[j] {
                x[s] = self.xb[r].max(0.0);
            }
        }
        let y = self.duals(&cost);
        let duals: Vec<f64> = y.iter().zip(&self.sign).map(|(y, s)| y * s).collect();
        let objective = x.iter().zip(&lp.cost).map(|(x, c)| x * c).sum();
        let dual_objective = duals.iter().zip(&lp.rhs).map(|(y, b)| y * b).sum();
        Ok(LpSolution { x, duals, objective, dual_objective, pivots: self.pivots })
    }

    /// Replaces zero-level basic artificials by structural or slack columns
    /// where the row allows it; rows that do not are redundant.
    fn drive_out_artificials(&mut self) {
        let m = self.m;
        for r in 0..m {
            if !self.is_artificial(self.basis[r]) {
                continue;
            }
            let row = self.binv[r * m..(r + 1) * m].to_vec();
            let candidate = (0..self.cols.len()).find(|&j| {
                !self.is_artificial(j)
                    && !self.in_basis[j]
                    && self.cols[j].iter().map(|&(i, v)| row[i] * v).sum::<f64>().abs() > 1e-7
            });
            if let Some(q) = candidate {
                let u = self.ftran(q);
                self.pivot(r, q, &u);
            }
        }
    }
}
