//! Dense two-phase simplex for the optimizer's subproblems.
//!
//! Solves `min c^T x` subject to equality rows, `<=` rows, and `x >= 0`.
//! Phase 1 minimizes the sum of artificial variables to find a basic
//! feasible solution; phase 2 optimizes the real objective. Entering columns
//! use Dantzig pricing and fall back to Bland's rule after a run of
//! degenerate pivots, which guarantees termination. All tie-breaks are by
//! smallest index, so solves are deterministic.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible")]
    Infeasible,
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("invalid linear program: {0}")]
    BadInput(String),
    #[error("simplex iteration limit reached ({0} pivots)")]
    IterationLimit(usize),
}

/// `min objective . x` over `x >= 0` with `equalities` rows `a.x = b` and
/// `inequalities` rows `a.x <= b`.
#[derive(Debug, Clone, Default)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub equalities: Vec<(Vec<f64>, f64)>,
    pub inequalities: Vec<(Vec<f64>, f64)>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub pivots: usize,
}

const PIVOT_TOL: f64 = 1e-9;

pub fn solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    solve_with(lp, 1e-9)
}

pub fn solve_with(lp: &LinearProgram, tolerance: f64) -> Result<LpSolution, LpError> {
    let n = lp.objective.len();
    if n == 0 {
        return Err(LpError::BadInput("objective has no variables".into()));
    }
    if !(tolerance > 0.0) {
        return Err(LpError::BadInput("tolerance must be positive".into()));
    }
    for (row, _) in lp.equalities.iter().chain(&lp.inequalities) {
        if row.len() != n {
            return Err(LpError::BadInput(format!(
                "constraint row has {} coefficients, expected {n}",
                row.len()
            )));
        }
    }
    let finite = |v: &f64| v.is_finite();
    if !lp.objective.iter().all(finite)
        || !lp
            .equalities
            .iter()
            .chain(&lp.inequalities)
            .all(|(row, b)| row.iter().all(finite) && b.is_finite())
    {
        return Err(LpError::BadInput("non-finite coefficient".into()));
    }

    let mut tableau = Tableau::build(lp);
    let mut pivots = 0usize;

    if tableau.artificials > 0 {
        tableau.price_out_phase1();
        tableau.run(tolerance, true, &mut pivots)?;
        let rhs_scale = tableau.rhs_scale().max(1.0);
        if tableau.objective_value() > 1e-7 * rhs_scale {
            return Err(LpError::Infeasible);
        }
        tableau.evict_artificials();
    }

    tableau.load_phase2_costs(&lp.objective);
    tableau.run(tolerance, false, &mut pivots)?;

    let x = tableau.extract(n);
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    Ok(LpSolution { x, objective, pivots })
}

struct Tableau {
    /// Rows of width `cols + 1`; the last entry is the RHS.
    rows: Vec<Vec<f64>>,
    /// Reduced-cost row of width `cols + 1`; the last entry is minus the
    /// current objective value.
    cost: Vec<f64>,
    basis: Vec<usize>,
    structurals: usize,
    slacks: usize,
    artificials: usize,
    scratch: Vec<f64>,
}

impl Tableau {
    fn cols(&self) -> usize {
        self.structurals + self.slacks + self.artificials
    }

    fn build(lp: &LinearProgram) -> Tableau {
        let n = lp.objective.len();
        let slacks = lp.inequalities.len();
        // Inequalities with negative RHS flip sign, turning their slack
        // coefficient to -1, so they need an artificial like equalities do.
        let artificials = lp.equalities.len()
            + lp.inequalities.iter().filter(|(_, b)| *b < 0.0).count();
        let cols = n + slacks + artificials;
        let width = cols + 1;

        let mut rows = Vec::with_capacity(lp.equalities.len() + slacks);
        let mut basis = Vec::with_capacity(rows.capacity());
        let mut next_artificial = n + slacks;

        for (a, b) in &lp.equalities {
            let sign = if *b < 0.0 { -1.0 } else { 1.0 };
            let mut row = vec![0.0; width];
            for (j, v) in a.iter().enumerate() {
                row[j] = sign * v;
            }
            row[cols] = sign * b;
            row[next_artificial] = 1.0;
            basis.push(next_artificial);
            next_artificial += 1;
            rows.push(row);
        }
        for (i, (a, b)) in lp.inequalities.iter().enumerate() {
            let sign = if *b < 0.0 { -1.0 } else { 1.0 };
            let mut row = vec![0.0; width];
            for (j, v) in a.iter().enumerate() {
                row[j] = sign * v;
            }
            row[n + i] = sign;
            row[cols] = sign * b;
            if *b < 0.0 {
                row[next_artificial] = 1.0;
                basis.push(next_artificial);
                next_artificial += 1;
            } else {
                basis.push(n + i);
            }
            rows.push(row);
        }
        debug_assert_eq!(next_artificial, cols);

        Tableau {
            rows,
            cost: vec![0.0; width],
            basis,
            structurals: n,
            slacks,
            artificials,
            scratch: vec![0.0; width],
        }
    }

    /// Phase-1 reduced costs: unit cost on artificials, priced out against
    /// the artificial starting basis.
    fn price_out_phase1(&mut self) {
        let cols = self.cols();
        self.cost.iter_mut().for_each(|v| *v = 0.0);
        for j in (self.structurals + self.slacks)..cols {
            self.cost[j] = 1.0;
        }
        for r in 0..self.rows.len() {
            if self.basis[r] >= self.structurals + self.slacks {
                let row = &self.rows[r];
                for (c, v) in self.cost.iter_mut().zip(row) {
                    *c -= v;
                }
            }
        }
    }

    fn load_phase2_costs(&mut self, objective: &[f64]) {
        self.cost.iter_mut().for_each(|v| *v = 0.0);
        self.cost[..self.structurals].copy_from_slice(objective);
        for r in 0..self.rows.len() {
            let factor = self.cost[self.basis[r]];
            if factor != 0.0 {
                let row = &self.rows[r];
                for (c, v) in self.cost.iter_mut().zip(row) {
                    *c -= factor * v;
                }
            }
        }
    }

    fn objective_value(&self) -> f64 {
        -self.cost[self.cols()]
    }

    fn rhs_scale(&self) -> f64 {
        let cols = self.cols();
        self.rows.iter().map(|r| r[cols].abs()).fold(0.0, f64::max)
    }

    /// Pivots basic artificials out (or drops their rows as redundant), then
    /// removes the artificial columns entirely.
    fn evict_artificials(&mut self) {
        let art_start = self.structurals + self.slacks;
        let mut r = 0;
        while r < self.rows.len() {
            if self.basis[r] >= art_start {
                let pivot_col = (0..art_start)
                    .filter(|&j| self.rows[r][j].abs() > PIVOT_TOL)
                    .max_by(|&a, &b| {
                        self.rows[r][a].abs().partial_cmp(&self.rows[r][b].abs()).unwrap()
                    });
                match pivot_col {
                    Some(c) => {
                        self.pivot(r, c);
                        self.basis[r] = c;
                        r += 1;
                    }
                    None => {
                        // No real variable left in the row: it was redundant.
                        self.rows.swap_remove(r);
                        self.basis.swap_remove(r);
                    }
                }
            } else {
                r += 1;
            }
        }
        let old_cols = self.cols();
        for row in &mut self.rows {
            row[art_start] = row[old_cols];
            row.truncate(art_start + 1);
        }
        self.cost[art_start] = self.cost[old_cols];
        self.cost.truncate(art_start + 1);
        self.scratch.truncate(art_start + 1);
        self.artificials = 0;
    }

    fn run(&mut self, tolerance: f64, phase1: bool, pivots: &mut usize) -> Result<(), LpError> {
        let cols = self.cols();
        // Artificials may never re-enter in phase 2 (already removed) and are
        // legal in phase 1 only as leftovers of the starting basis.
        let enterable = if phase1 { self.structurals + self.slacks } else { cols };
        let limit = 200 * (self.rows.len() + cols) + 10_000;
        let mut degenerate_streak = 0usize;
        let mut bland = false;

        loop {
            let scale = self.cost[..enterable]
                .iter()
                .fold(1.0f64, |acc, v| acc.max(v.abs()));
            let threshold = -tolerance * scale;

            let entering = if bland {
                (0..enterable).find(|&j| self.cost[j] < threshold)
            } else {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..enterable {
                    let c = self.cost[j];
                    if c < threshold && best.map_or(true, |(_, bc)| c < bc) {
                        best = Some((j, c));
                    }
                }
                best.map(|(j, _)| j)
            };
            let Some(col) = entering else {
                return Ok(());
            };

            let mut leaving: Option<(usize, f64)> = None;
            for r in 0..self.rows.len() {
                let a = self.rows[r][col];
                if a > PIVOT_TOL {
                    let ratio = self.rows[r][cols] / a;
                    let better = match leaving {
                        None => true,
                        Some((lr, lratio)) => {
                            ratio < lratio - 1e-12
                                || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((row, ratio)) = leaving else {
                return Err(LpError::Unbounded);
            };

            if ratio.abs() <= 1e-10 {
                degenerate_streak += 1;
                if degenerate_streak > 4 * (self.rows.len() + 16) {
                    bland = true;
                }
            } else {
                degenerate_streak = 0;
            }

            self.pivot(row, col);
            self.basis[row] = col;
            *pivots += 1;
            if *pivots > limit {
                return Err(LpError::IterationLimit(*pivots));
            }
        }
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.rows[r].len();
        {
            let prow = &mut self.rows[r];
            let inv = 1.0 / prow[c];
            for v in prow.iter_mut() {
                *v *= inv;
            }
            prow[c] = 1.0;
            self.scratch[..width].copy_from_slice(prow);
        }
        let scratch = &self.scratch[..width];
        for (rr, row) in self.rows.iter_mut().enumerate() {
            if rr == r {
                continue;
            }
            let factor = row[c];
            if factor != 0.0 {
                for (v, s) in row.iter_mut().zip(scratch) {
                    *v -= factor * s;
                }
                row[c] = 0.0;
            }
        }
        let factor = self.cost[c];
        if factor != 0.0 {
            for (v, s) in self.cost.iter_mut().zip(scratch) {
                *v -= factor * s;
            }
            self.cost[c] = 0.0;
        }
    }

    fn extract(&self, n: usize) -> Vec<f64> {
        let cols = self.cols();
        let mut x = vec![0.0; n];
        for (r, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rows[r][cols].max(0.0);
            }
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn le(a: &[f64], b: f64) -> (Vec<f64>, f64) {
        (a.to_vec(), b)
    }

    #[test]
    fn box_optimum() {
        // min -x s.t. x <= 1 -> x = 1.
        let lp = LinearProgram {
            objective: vec![-1.0],
            equalities: vec![],
            inequalities: vec![le(&[1.0], 1.0)],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12);
        assert!((sol.objective + 1.0).abs() < 1e-12);
    }

    #[test]
    fn transportation_matches_hand_solution() {
        // Balanced 2x3 transportation problem; optimal plan found by the
        // stepping-stone method on paper: y13=15, y11=5, y21=5, y22=25,
        // total cost 150. One of the five equalities is redundant.
        let c = vec![2.0, 3.0, 1.0, 5.0, 4.0, 8.0];
        let eq = vec![
            (vec![1.0, 1.0, 1.0, 0.0, 0.0, 0.0], 20.0),
            (vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0], 30.0),
            (vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0], 10.0),
            (vec![0.0, 1.0, 0.0, 0.0, 1.0, 0.0], 25.0),
            (vec![0.0, 0.0, 1.0, 0.0, 0.0, 1.0], 15.0),
        ];
        let lp = LinearProgram { objective: c, equalities: eq, inequalities: vec![] };
        let sol = solve(&lp).unwrap();
        assert!((sol.objective - 150.0).abs() < 1e-9, "objective {}", sol.objective);
        // Feasibility of the returned vertex.
        for (row, b) in &lp.equalities {
            let lhs: f64 = row.iter().zip(&sol.x).map(|(a, x)| a * x).sum();
            assert!((lhs - b).abs() < 1e-9);
        }
    }

    #[test]
    fn detects_infeasible() {
        // x <= -1 with x >= 0.
        let lp = LinearProgram {
            objective: vec![1.0],
            equalities: vec![],
            inequalities: vec![le(&[1.0], -1.0)],
        };
        assert_eq!(solve(&lp).unwrap_err(), LpError::Infeasible);

        // Contradictory equalities.
        let lp = LinearProgram {
            objective: vec![0.0, 0.0],
            equalities: vec![
                (vec![1.0, 1.0], 1.0),
                (vec![1.0, 1.0], 2.0),
            ],
            inequalities: vec![],
        };
        assert_eq!(solve(&lp).unwrap_err(), LpError::Infeasible);
    }

    #[test]
    fn detects_unbounded() {
        // min -x1 s.t. x1 - x2 <= 1: the ray (1+t, t) drives it to -inf.
        let lp = LinearProgram {
            objective: vec![-1.0, 0.0],
            equalities: vec![],
            inequalities: vec![le(&[1.0, -1.0], 1.0)],
        };
        assert_eq!(solve(&lp).unwrap_err(), LpError::Unbounded);
    }

    #[test]
    fn survives_degenerate_corners() {
        // The redundant third face makes the optimal corner degenerate.
        let lp = LinearProgram {
            objective: vec![-1.0, -1.0],
            equalities: vec![],
            inequalities: vec![
                le(&[1.0, 0.0], 1.0),
                le(&[0.0, 1.0], 1.0),
                le(&[1.0, 1.0], 2.0),
            ],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.objective + 2.0).abs() < 1e-9);
    }

    #[test]
    fn handles_negative_rhs_inequalities() {
        // x1 + x2 >= 1 written as -x1 - x2 <= -1; minimize x1 + 2 x2.
        let lp = LinearProgram {
            objective: vec![1.0, 2.0],
            equalities: vec![],
            inequalities: vec![le(&[-1.0, -1.0], -1.0)],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.objective - 1.0).abs() < 1e-9);
        assert!((sol.x[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equality_pins_the_solution() {
        // min x1 s.t. x1 + x2 = 1, x2 <= 0.25 -> x1 = 0.75.
        let lp = LinearProgram {
            objective: vec![1.0, 0.0],
            equalities: vec![(vec![1.0, 1.0], 1.0)],
            inequalities: vec![le(&[0.0, 1.0], 0.25)],
        };
        let sol = solve(&lp).unwrap();
        assert!((sol.x[0] - 0.75).abs() < 1e-9);
    }

    #[test]
    fn rejects_malformed_input() {
        let lp = LinearProgram {
            objective: vec![1.0],
            equalities: vec![(vec![1.0, 2.0], 1.0)],
            inequalities: vec![],
        };
        assert!(matches!(solve(&lp), Err(LpError::BadInput(_))));

        let lp = LinearProgram {
            objective: vec![f64::NAN],
            equalities: vec![],
            inequalities: vec![],
        };
        assert!(matches!(solve(&lp), Err(LpError::BadInput(_))));
    }
}
