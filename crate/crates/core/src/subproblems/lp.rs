//! Dense two-phase simplex method with Bland's rule.
//!
//! Solves `min c'x` subject to `x >= 0` and a list of `<=`, `>=` and `=` rows.
//! Sizes here are tiny (a few hundred columns, a handful of rows), so a dense
//! tableau is simplest. Every row gets an artificial column; those columns are
//! kept after phase 1 (but never re-enter) because they hold `B^{-1}`, from
//! which the dual solution is read off for the optimality certificate.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Self { coeffs, relation, rhs }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual value per constraint (`<=` rows are nonpositive, `>=` rows nonnegative).
    pub duals: Vec<f64>,
    /// Largest violation among primal feasibility, dual feasibility,
    /// complementary slackness and the duality gap.
    pub kkt_residual: f64,
    pub pivots: usize,
}

struct Tableau {
    /// `m` rows of `cols + 1` entries; the last entry is the right-hand side.
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.cols]
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let piv = self.rows[r][j];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[j] = 0.0;
            }
        }
        self.basis[r] = j;
    }

    fn reduced_cost(&self, cost: &[f64], j: usize) -> f64 {
        let zj: f64 = self.basis.iter().zip(&self.rows).map(|(&b, row)| cost[b] * row[j]).sum();
        cost[j] - zj
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        self.basis.iter().enumerate().map(|(i, &b)| cost[b] * self.rhs(i)).sum()
    }

    /// Bland's rule: lowest-index improving column, lowest-index basic variable on ratio ties.
    fn optimize(&mut self, cost: &[f64], allowed: usize, tol: f64, max_pivots: usize, pivots: &mut usize) -> Result<()> {
        loop {
            let entering = (0..allowed).find(|&j| !self.basis.contains(&j) && self.reduced_cost(cost, j) < -tol);
            let Some(j) = entering else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][j];
                if a > tol {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((r, best)) => {
                            if ratio < best - tol || (ratio <= best + tol && self.basis[i] < self.basis[r]) {
                                Some((i, ratio))
                            } else {
                                Some((r, best))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = leave else {
                return Err(Error::LpNumericalFailure("objective is unbounded below".into()));
            };
            self.pivot(r, j);
            *pivots += 1;
            if *pivots > max_pivots {
                return Err(Error::LpNumericalFailure(format!("no convergence within {max_pivots} pivots")));
            }
        }
    }
}

/// Minimises `c'x` over `x >= 0` and `constraints`.
pub fn solve_lp(c: &[f64], constraints: &[Constraint], tol: f64, max_pivots: usize) -> Result<LpSolution> {
    let n = c.len();
    if let Some(bad) = constraints.iter().find(|k| k.coeffs.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, got: bad.coeffs.len() });
    }
    if c.iter().chain(constraints.iter().flat_map(|k| k.coeffs.iter().chain([&k.rhs]))).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParam("LP data must be finite".into()));
    }
    let m = constraints.len();
    let n_slack = constraints.iter().filter(|k| k.relation != Relation::Eq).count();
    let art0 = n + n_slack;
    let cols = art0 + m;

    let mut rows = Vec::with_capacity(m);
    let mut signs = Vec::with_capacity(m);
    let mut slack = n;
    for (i, k) in constraints.iter().enumerate() {
        let mut row = vec![0.0; cols + 1];
        row[..n].copy_from_slice(&k.coeffs);
        match k.relation {
            Relation::Le => {
                row[slack] = 1.0;
                slack += 1;
            }
            Relation::Ge => {
                row[slack] = -1.0;
                slack += 1;
            }
            Relation::Eq => {}
        }
        row[cols] = k.rhs;
        let sign = if k.rhs < 0.0 { -1.0 } else { 1.0 };
        if sign < 0.0 {
            row.iter_mut().for_each(|v| *v = -*v);
        }
        row[art0 + i] = 1.0;
        rows.push(row);
        signs.push(sign);
    }
    let mut t = Tableau { rows, basis: (art0..cols).collect(), cols };
    let mut pivots = 0;

    // Phase 1: minimise the artificial total.
    let mut phase1 = vec![0.0; cols];
    phase1[art0..].iter_mut().for_each(|v| *v = 1.0);
    t.optimize(&phase1, art0, tol, max_pivots, &mut pivots)?;
    let scale = 1.0 + constraints.iter().map(|k| k.rhs.abs()).fold(0.0, f64::max);
    let infeasibility = t.objective(&phase1);
    if infeasibility > tol * scale {
        return Err(Error::Infeasible(format!("phase 1 ended with artificial total {infeasibility:.3e}")));
    }
    // Drive zero-level artificials out of the basis where possible.
    for r in 0..m {
        if t.basis[r] >= art0 {
            if let Some(j) = (0..art0).find(|&j| t.rows[r][j].abs() > tol && !t.basis.contains(&j)) {
                t.pivot(r, j);
                pivots += 1;
            }
        }
    }

    // Phase 2 on the original objective; artificial columns may not enter.
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(c);
    t.optimize(&cost, art0, tol, max_pivots, &mut pivots)?;

    let mut x = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rhs(i);
        }
    }
    // y' = c_B' B^{-1}; B^{-1} sits in the artificial columns (up to the row signs).
    let duals: Vec<f64> = (0..m)
        .map(|i| signs[i] * t.basis.iter().zip(&t.rows).map(|(&b, row)| cost[b] * row[art0 + i]).sum::<f64>())
        .collect();
    let objective: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    let kkt_residual = lp_kkt_residual(c, constraints, &x, &duals);
    Ok(LpSolution { x, objective, duals, kkt_residual, pivots })
}

/// Optimality certificate for `min c'x, x >= 0` with the given duals.
pub fn lp_kkt_residual(c: &[f64], constraints: &[Constraint], x: &[f64], duals: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for v in x {
        worst = worst.max(-v);
    }
    for (k, y) in constraints.iter().zip(duals) {
        let lhs: f64 = k.coeffs.iter().zip(x).map(|(a, b)| a * b).sum();
        let slack = lhs - k.rhs;
        let (primal, dual_sign) = match k.relation {
            Relation::Le => (slack.max(0.0), y.max(0.0)),
            Relation::Ge => ((-slack).max(0.0), (-y).max(0.0)),
            Relation::Eq => (slack.abs(), 0.0),
        };
        worst = worst.max(primal).max(dual_sign).max((y * slack).abs());
    }
    for j in 0..c.len() {
        let rc = c[j] - constraints.iter().zip(duals).map(|(k, y)| y * k.coeffs[j]).sum::<f64>();
        worst = worst.max(-rc).max((rc * x[j]).abs());
    }
    let primal: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
    let dual: f64 = constraints.iter().zip(duals).map(|(k, y)| y * k.rhs).sum();
    worst.max((primal - dual).abs())
}
