//! Small dense two-phase simplex (Bland's rule).
//!
//! Every row gets an artificial variable, so an infeasible program yields a
//! Farkas certificate from the phase-one duals. Answers are checked against
//! the original constraints before being returned.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<(usize, f64)>,
    pub rel: Relation,
    pub rhs: f64,
}

/// Maximize `objective · x` subject to the constraints and `x >= 0`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearProgram {
    pub n_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    /// `multipliers[i]` weights constraint `i`; the weighted sum of the
    /// constraints is a contradiction `(≤ 0) · x ≥ gap > 0` style inequality.
    Infeasible { multipliers: Vec<f64>, gap: f64 },
    Unbounded { x: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LpError {
    #[error("simplex did not finish within {0} pivots")]
    IterationLimit(usize),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

const PIVOT_EPS: f64 = 1e-11;
const COST_EPS: f64 = 1e-10;
/// Constraint residual accepted when checking an answer.
pub const RESIDUAL_TOL: f64 = 1e-8;

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        LinearProgram {
            n_vars,
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
        }
    }

    pub fn add(&mut self, coeffs: Vec<(usize, f64)>, rel: Relation, rhs: f64) -> usize {
        self.constraints.push(Constraint { coeffs, rel, rhs });
        self.constraints.len() - 1
    }

    /// Largest violation of the constraints (and of `x >= 0`) at `x`.
    pub fn max_residual(&self, x: &[f64]) -> f64 {
        let mut worst = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().map(|&(j, a)| a * x[j]).sum();
            let scale = 1.0 + c.rhs.abs();
            let v = match c.rel {
                Relation::Le => (lhs - c.rhs).max(0.0),
                Relation::Ge => (c.rhs - lhs).max(0.0),
                Relation::Eq => (lhs - c.rhs).abs(),
            } / scale;
            worst = worst.max(v);
        }
        worst
    }

    pub fn solve(&self) -> Result<LpOutcome, LpError> {
        Tableau::build(self).run(self)
    }
}

struct Tableau {
    m: usize,
    /// Structural, then one slack per inequality, then one artificial per row.
    n_cols: usize,
    art_start: usize,
    /// Row-major `m x (n_cols + 1)`; last column is the right-hand side.
    a: Vec<f64>,
    basis: Vec<usize>,
    /// Sign applied to each original row so its right-hand side is >= 0.
    sign: Vec<f64>,
}

impl Tableau {
    fn build(lp: &LinearProgram) -> Self {
        let m = lp.constraints.len();
        let n_slack = lp.constraints.iter().filter(|c| c.rel != Relation::Eq).count();
        let art_start = lp.n_vars + n_slack;
        let n_cols = art_start + m;
        let w = n_cols + 1;
        let mut a = vec![0.0; m * w];
        let mut sign = vec![1.0; m];
        let mut slack = lp.n_vars;
        for (i, c) in lp.constraints.iter().enumerate() {
            let s = if c.rhs < 0.0 { -1.0 } else { 1.0 };
            sign[i] = s;
            for &(j, v) in &c.coeffs {
                a[i * w + j] += s * v;
            }
            match c.rel {
                Relation::Le => {
                    a[i * w + slack] = s;
                    slack += 1;
                }
                Relation::Ge => {
                    a[i * w + slack] = -s;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            a[i * w + art_start + i] = 1.0;
            a[i * w + n_cols] = s * c.rhs;
        }
        Tableau {
            m,
            n_cols,
            art_start,
            a,
            basis: (art_start..art_start + m).collect(),
            sign,
        }
    }

    fn width(&self) -> usize {
        self.n_cols + 1
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.width() + j]
    }

    fn pivot(&mut self, r: usize, c: usize, cost: &mut [f64]) {
        let w = self.width();
        let p = self.a[r * w + c];
        for j in 0..w {
            self.a[r * w + j] /= p;
        }
        self.a[r * w + c] = 1.0;
        for i in 0..self.m {
            if i == r {
                continue;
            }
            let f = self.a[i * w + c];
            if f != 0.0 {
                for j in 0..w {
                    self.a[i * w + j] -= f * self.a[r * w + j];
                }
                self.a[i * w + c] = 0.0;
            }
        }
        let f = cost[c];
        if f != 0.0 {
            for j in 0..w {
                cost[j] -= f * self.a[r * w + j];
            }
            cost[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Minimizes with reduced-cost row `cost` (last entry: minus objective).
    /// Returns the unbounded entering column, if any.
    fn optimize(&mut self, cost: &mut [f64], allowed: usize) -> Result<Option<usize>, LpError> {
        let limit = 50_000 + 100 * (self.m + self.n_cols);
        for _ in 0..limit {
            // Bland: lowest-index improving column.
            let Some(c) = (0..allowed).find(|&j| cost[j] < -COST_EPS) else {
                return Ok(None);
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let v = self.at(i, c);
                if v > PIVOT_EPS {
                    let ratio = self.at(i, self.n_cols) / v;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-12 || (ratio <= br + 1e-12 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    }
                }
            }
            match best {
                None => return Ok(Some(c)),
                Some((r, _)) => self.pivot(r, c, cost),
            }
        }
        Err(LpError::IterationLimit(limit))
    }

    fn primal(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.n_cols];
        for (i, &b) in self.basis.iter().enumerate() {
            x[b] = self.at(i, self.n_cols);
        }
        x.truncate(n);
        x
    }

    fn run(mut self, lp: &LinearProgram) -> Result<LpOutcome, LpError> {
        let w = self.width();
        let n = lp.n_vars;
        // Phase one: minimize the sum of artificials.
        let mut cost = vec![0.0; w];
        for j in self.art_start..self.n_cols {
            cost[j] = 1.0;
        }
        for i in 0..self.m {
            for j in 0..w {
                cost[j] -= self.a[i * w + j];
            }
        }
        if self.optimize(&mut cost, self.art_start)?.is_some() {
            return Err(LpError::Numerical("phase one reported unbounded".into()));
        }
        let infeasibility = -cost[self.n_cols];
        if infeasibility > RESIDUAL_TOL {
            // Duals y_i = 1 - reduced cost of artificial i.
            let y: Vec<f64> = (0..self.m).map(|i| 1.0 - cost[self.art_start + i]).collect();
            return self.certify_infeasible(lp, y);
        }

        // Drive zero-level artificials out of the basis where possible.
        for r in 0..self.m {
            if self.basis[r] >= self.art_start {
                if let Some(c) = (0..self.art_start).find(|&j| self.at(r, j).abs() > 1e-9) {
                    let mut dummy = vec![0.0; w];
                    self.pivot(r, c, &mut dummy);
                }
            }
        }

        // Phase two: minimize -objective.
        let mut cost = vec![0.0; w];
        for (j, &c) in lp.objective.iter().enumerate() {
            cost[j] = -c;
        }
        for r in 0..self.m {
            let b = self.basis[r];
            let f = cost[b];
            if f != 0.0 {
                for j in 0..w {
                    cost[j] -= f * self.a[r * w + j];
                }
            }
        }
        let unbounded = self.optimize(&mut cost, self.art_start)?;
        let x = self.primal(n);
        let residual = lp.max_residual(&x);
        if residual > RESIDUAL_TOL {
            return Err(LpError::Numerical(format!("solution residual {residual:e}")));
        }
        if unbounded.is_some() {
            return Ok(LpOutcome::Unbounded { x });
        }
        let value = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpOutcome::Optimal { x, value })
    }

    fn certify_infeasible(&self, lp: &LinearProgram, y: Vec<f64>) -> Result<LpOutcome, LpError> {
        // In original row orientation.
        let multipliers: Vec<f64> = y.iter().zip(&self.sign).map(|(v, s)| v * s).collect();
        // Check: the combination sum_i u_i * row_i must have every structural
        // coefficient <= 0, the right sign on each inequality multiplier, and
        // a strictly positive right-hand side.
        let mut combo = vec![0.0; lp.n_vars];
        let mut gap = 0.0;
        let mut scale = 0.0f64;
        for (c, &u) in lp.constraints.iter().zip(&multipliers) {
            for &(j, v) in &c.coeffs {
                combo[j] += u * v;
                scale = scale.max((u * v).abs());
            }
            gap += u * c.rhs;
            let bad_sign = match c.rel {
                Relation::Le => u > 1e-9,
                Relation::Ge => u < -1e-9,
                Relation::Eq => false,
            };
            if bad_sign {
                return Err(LpError::Numerical("infeasibility certificate has a wrong-signed multiplier".into()));
            }
        }
        let tol = 1e-9 * (1.0 + scale);
        if combo.iter().any(|&v| v > tol) || gap <= RESIDUAL_TOL {
            return Err(LpError::Numerical("infeasibility certificate failed verification".into()));
        }
        Ok(LpOutcome::Infeasible { multipliers, gap })
    }
}
