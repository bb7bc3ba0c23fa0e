//! Dense bounded-variable primal simplex.
//!
//! Solves `min c.x` subject to `A x = b`, `lower <= x <= upper`. Lower bounds
//! must be finite; upper bounds may be infinite. Problems here are tiny (a few
//! dozen columns), so a full tableau is kept and Bland's rule is used
//! throughout for guaranteed termination.

use crate::error::{Error, Result};

/// Phase-one objective above this is reported as infeasible.
pub const FEASIBILITY_TOL: f64 = 1e-9;
const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-13;
const MAX_ITERATIONS: usize = 50_000;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub cost: Vec<f64>,
    /// Constraint rows.
    pub rows: Vec<Vec<f64>>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl LinearProgram {
    /// A program with `n` variables bounded to `[0, +inf)` and zero cost.
    pub fn new(n: usize) -> Self {
        LinearProgram {
            cost: vec![0.0; n],
            rows: Vec::new(),
            rhs: Vec::new(),
            lower: vec![0.0; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.cost.len()
    }

    pub fn add_row(&mut self, coeffs: Vec<f64>, rhs: f64) {
        assert_eq!(coeffs.len(), self.num_vars());
        self.rows.push(coeffs);
        self.rhs.push(rhs);
    }

    pub fn set_bounds(&mut self, j: usize, lower: f64, upper: f64) {
        self.lower[j] = lower;
        self.upper[j] = upper;
    }

    fn check(&self) -> Result<()> {
        let n = self.num_vars();
        if self.lower.len() != n || self.upper.len() != n || self.rows.len() != self.rhs.len() {
            return Err(Error::Pipeline("linear program has inconsistent dimensions".into()));
        }
        for j in 0..n {
            if !self.lower[j].is_finite() || self.upper[j] < self.lower[j] || self.upper[j].is_nan() {
                return Err(Error::Pipeline(format!(
                    "variable {j} has invalid bounds [{}, {}]",
                    self.lower[j], self.upper[j]
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multipliers of the equality rows.
    pub duals: Vec<f64>,
    /// `c - A^T y`.
    pub reduced_costs: Vec<f64>,
    /// `b.y` plus the bound terms of the dual.
    pub dual_objective: f64,
    /// `|objective - dual_objective|`; zero at an exact optimum.
    pub duality_gap: f64,
    /// Largest `|A x - b|` entry.
    pub primal_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Status {
    Basic(usize),
    AtLower,
    AtUpper,
}

struct Tableau {
    /// `B^-1 A` over structural and artificial columns.
    t: Vec<Vec<f64>>,
    /// Values of the basic variables, row by row, in shifted coordinates.
    beta: Vec<f64>,
    basis: Vec<usize>,
    status: Vec<Status>,
    /// Widths `upper - lower` in shifted coordinates.
    width: Vec<f64>,
    iterations: usize,
}

impl Tableau {
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut d = cost.to_vec();
        for (i, &bv) in self.basis.iter().enumerate() {
            let cb = cost[bv];
            if cb != 0.0 {
                for (dj, tij) in d.iter_mut().zip(&self.t[i]) {
                    *dj -= cb * tij;
                }
            }
        }
        d
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.t[r][j];
        for v in self.t[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != 0.0 {
                for (v, pr) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                row[j] = 0.0;
            }
        }
        // the caller sets the leaving variable's status
        self.basis[r] = j;
        self.status[j] = Status::Basic(r);
    }

    fn value(&self, j: usize) -> f64 {
        match self.status[j] {
            Status::Basic(r) => self.beta[r],
            Status::AtLower => 0.0,
            Status::AtUpper => self.width[j],
        }
    }

    /// Runs primal simplex iterations to optimality for `cost`.
    fn optimize(&mut self, cost: &[f64]) -> Result<()> {
        loop {
            if self.iterations >= MAX_ITERATIONS {
                return Err(Error::Pipeline("simplex iteration limit reached".into()));
            }
            let d = self.reduced_costs(cost);
            // Bland: lowest-index improving column.
            let entering = (0..d.len()).find_map(|j| match self.status[j] {
                Status::AtLower if d[j] < -COST_TOL && self.width[j] > 0.0 => Some((j, 1.0)),
                Status::AtUpper if d[j] > COST_TOL => Some((j, -1.0)),
                _ => None,
            });
            let Some((j, dir)) = entering else {
                return Ok(());
            };
            self.iterations += 1;

            let mut step = self.width[j];
            let mut leave: Option<(usize, bool)> = None;
            for r in 0..self.basis.len() {
                let alpha = dir * self.t[r][j];
                let bv = self.basis[r];
                let limit = if alpha > PIVOT_TOL {
                    self.beta[r] / alpha
                } else if alpha < -PIVOT_TOL && self.width[bv].is_finite() {
                    (self.width[bv] - self.beta[r]) / -alpha
                } else {
                    continue;
                };
                let limit = limit.max(0.0);
                let better = match leave {
                    _ if limit < step => true,
                    Some((lr, _)) if limit == step => bv < self.basis[lr],
                    _ => false,
                };
                if better {
                    step = limit;
                    leave = Some((r, alpha > 0.0));
                }
            }
            if !step.is_finite() {
                return Err(Error::Unbounded);
            }

            for r in 0..self.basis.len() {
                self.beta[r] -= dir * step * self.t[r][j];
            }
            let entering_value = if dir > 0.0 { step } else { self.width[j] - step };
            match leave {
                None => {
                    self.status[j] = if dir > 0.0 { Status::AtUpper } else { Status::AtLower };
                }
                Some((r, to_lower)) => {
                    let out = self.basis[r];
                    self.pivot(r, j);
                    self.beta[r] = entering_value;
                    self.status[out] = if to_lower { Status::AtLower } else { Status::AtUpper };
                }
            }
        }
    }
}

/// Solves the program. Returns [`Error::Infeasible`] (with an empty basis
/// label) when phase one cannot drive the artificial sum below
/// [`FEASIBILITY_TOL`].
pub fn solve(lp: &LinearProgram) -> Result<Solution> {
    lp.check()?;
    let n = lp.num_vars();
    let m = lp.rows.len();

    // Shift to zero lower bounds and make every right-hand side non-negative.
    let mut signs = vec![1.0; m];
    let mut t = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    for i in 0..m {
        let shifted = lp.rhs[i] - dot(&lp.rows[i], &lp.lower);
        if shifted < 0.0 {
            signs[i] = -1.0;
        }
        let mut row: Vec<f64> = lp.rows[i].iter().map(|a| signs[i] * a).collect();
        row.extend((0..m).map(|k| if k == i { 1.0 } else { 0.0 }));
        t.push(row);
        beta.push(signs[i] * shifted);
    }
    let mut width: Vec<f64> = (0..n).map(|j| lp.upper[j] - lp.lower[j]).collect();
    width.extend(std::iter::repeat_n(f64::INFINITY, m));
    let mut status = vec![Status::AtLower; n + m];
    for (i, s) in status[n..].iter_mut().enumerate() {
        *s = Status::Basic(i);
    }
    let mut tab = Tableau {
        t,
        beta,
        basis: (n..n + m).collect(),
        status,
        width,
        iterations: 0,
    };

    let mut phase_one = vec![0.0; n + m];
    phase_one[n..].fill(1.0);
    tab.optimize(&phase_one)?;
    let residual: f64 = (n..n + m).map(|j| tab.value(j)).sum();
    if residual > FEASIBILITY_TOL {
        return Err(Error::Infeasible {
            basis: String::new(),
            residual,
        });
    }
    // Pin artificials at zero; any left in the basis are degenerate.
    for j in n..n + m {
        tab.width[j] = 0.0;
        match tab.status[j] {
            Status::Basic(r) => tab.beta[r] = 0.0,
            _ => tab.status[j] = Status::AtLower,
        }
    }

    let mut cost = lp.cost.clone();
    cost.extend(std::iter::repeat_n(0.0, m));
    tab.optimize(&cost)?;

    let x: Vec<f64> = (0..n).map(|j| lp.lower[j] + tab.value(j)).collect();
    let objective = dot(&lp.cost, &x);

    // Artificial columns hold B^-1, so their reduced costs are -y (sign-flipped rows).
    let d = tab.reduced_costs(&cost);
    let duals: Vec<f64> = (0..m).map(|i| -d[n + i] * signs[i]).collect();
    let reduced_costs: Vec<f64> = (0..n)
        .map(|j| lp.cost[j] - (0..m).map(|i| duals[i] * lp.rows[i][j]).sum::<f64>())
        .collect();
    let mut dual_objective = dot(&lp.rhs, &duals);
    for j in 0..n {
        let dj = reduced_costs[j];
        if dj > 0.0 {
            dual_objective += dj * lp.lower[j];
        } else if dj < 0.0 {
            dual_objective += dj * lp.upper[j];
        }
    }
    let primal_residual = (0..m)
        .map(|i| (dot(&lp.rows[i], &x) - lp.rhs[i]).abs())
        .fold(0.0, f64::max);

    Ok(Solution {
        duality_gap: (objective - dual_objective).abs(),
        x,
        objective,
        duals,
        reduced_costs,
        dual_objective,
        primal_residual,
        iterations: tab.iterations,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18  ->  (2, 6), 36
        let mut lp = LinearProgram::new(5);
        lp.cost = vec![-3.0, -5.0, 0.0, 0.0, 0.0];
        lp.add_row(vec![1.0, 0.0, 1.0, 0.0, 0.0], 4.0);
        lp.add_row(vec![0.0, 2.0, 0.0, 1.0, 0.0], 12.0);
        lp.add_row(vec![3.0, 2.0, 0.0, 0.0, 1.0], 18.0);
        let s = solve(&lp).unwrap();
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        assert!((s.objective + 36.0).abs() < 1e-12);
        assert!(s.duality_gap < 1e-12);
    }

    #[test]
    fn upper_bounds_are_respected_by_flips() {
        // min -x - y, x + y <= 10 (slack s), x in [1, 3], y in [0, 4]
        let mut lp = LinearProgram::new(3);
        lp.cost = vec![-1.0, -1.0, 0.0];
        lp.set_bounds(0, 1.0, 3.0);
        lp.set_bounds(1, 0.0, 4.0);
        lp.add_row(vec![1.0, 1.0, 1.0], 10.0);
        let s = solve(&lp).unwrap();
        assert_eq!(&s.x[..2], &[3.0, 4.0]);
        assert!(s.duality_gap < 1e-12);
    }

    #[test]
    fn negative_rhs_and_free_range_variables() {
        // x - y = -2, x in [-5, 5], y in [0, 1], min x -> x = -2 + y, y = 0 -> -2
        let mut lp = LinearProgram::new(2);
        lp.cost = vec![1.0, 0.0];
        lp.set_bounds(0, -5.0, 5.0);
        lp.set_bounds(1, 0.0, 1.0);
        lp.add_row(vec![1.0, -1.0], -2.0);
        let s = solve(&lp).unwrap();
        assert!((s.x[0] + 2.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
        assert!(s.duality_gap < 1e-12);
    }

    #[test]
    fn infeasible_program_is_reported() {
        let mut lp = LinearProgram::new(1);
        lp.set_bounds(0, 0.0, 1.0);
        lp.add_row(vec![1.0], 2.0);
        match solve(&lp) {
            Err(Error::Infeasible { residual, .. }) => assert!((residual - 1.0).abs() < 1e-12),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn unbounded_program_is_reported() {
        let mut lp = LinearProgram::new(2);
        lp.cost = vec![-1.0, 0.0];
        lp.add_row(vec![1.0, -1.0], 0.0);
        assert_eq!(solve(&lp), Err(Error::Unbounded));
    }

    #[test]
    fn degenerate_problem_terminates() {
        // Beale's cycling example; Bland's rule must terminate.
        let mut lp = LinearProgram::new(7);
        lp.cost = vec![-0.75, 150.0, -0.02, 6.0, 0.0, 0.0, 0.0];
        lp.add_row(vec![0.25, -60.0, -0.04, 9.0, 1.0, 0.0, 0.0], 0.0);
        lp.add_row(vec![0.5, -90.0, -0.02, 3.0, 0.0, 1.0, 0.0], 0.0);
        lp.add_row(vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0], 1.0);
        let s = solve(&lp).unwrap();
        assert!((s.objective + 0.05).abs() < 1e-12, "{}", s.objective);
        assert!(s.duality_gap < 1e-12);
    }
}
