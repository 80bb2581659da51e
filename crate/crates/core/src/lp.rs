//! Dense two-phase tableau simplex for small linear programs.

use crate::linalg::invert;

const PIVOT_TOL: f64 = 1e-10;
const FEAS_TOL: f64 = 1e-9;
const MAX_PIVOTS: usize = 200_000;
const REFACTOR_EVERY: usize = 16;

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
        Constraint { coeffs, relation, rhs }
    }
}

/// `maximize objective·x` subject to the constraints and `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One dual value per constraint (nonnegative on `Le` rows,
    /// nonpositive on `Ge` rows of a maximization).
    pub duals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
    /// Pivot limit hit; only possible through numerical trouble.
    Stalled,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

struct Tableau {
    /// Constraint rows as first built, right-hand side last.
    original: Vec<Vec<f64>>,
    rows: Vec<Vec<f64>>,
    z: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

enum Step {
    Optimal,
    Unbounded,
    Stalled,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let width = self.width;
        let p = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for j in 0..=width {
                    row[j] -= f * pivot_row[j];
                }
                row[c] = 0.0;
            }
        }
        let f = self.z[c];
        if f != 0.0 {
            for j in 0..=width {
                self.z[j] -= f * pivot_row[j];
            }
            self.z[c] = 0.0;
        }
        self.basis[r] = c;
        self.clamp();
    }

    /// Round-off can push degenerate basics slightly below zero; left
    /// alone, they yield negative ratios and pivots on tiny entries.
    fn clamp(&mut self) {
        let width = self.width;
        for row in self.rows.iter_mut() {
            if row[width] < 0.0 && row[width] > -FEAS_TOL {
                row[width] = 0.0;
            }
        }
    }

    /// Recomputes the tableau of the current basis from the original rows.
    fn refactor(&mut self) {
        let m = self.basis.len();
        let b: Vec<Vec<f64>> = (0..m)
            .map(|i| self.basis.iter().map(|&c| self.original[i][c]).collect())
            .collect();
        let Some(inv) = invert(b) else { return };
        for i in 0..m {
            for j in 0..=self.width {
                self.rows[i][j] = (0..m).map(|k| inv[i][k] * self.original[k][j]).sum();
            }
            self.rows[i][self.basis[i]] = 1.0;
        }
        self.clamp();
        let cost = std::mem::take(&mut self.cost);
        self.set_objective(cost);
    }

    /// Bland's rule: lowest-index improving column, ties in the ratio
    /// test to the lowest basic variable.
    fn run(&mut self, allowed: &[bool]) -> Step {
        for step in 1..=MAX_PIVOTS {
            let Some(c) = (0..self.width).find(|&j| allowed[j] && self.z[j] < -PIVOT_TOL) else {
                return Step::Optimal;
            };
            let mut best: Option<(usize, f64)> = None;
            for (i, row) in self.rows.iter().enumerate() {
                let a = row[c];
                if a > PIVOT_TOL {
                    let ratio = row[self.width].max(0.0) / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-15 || (ratio <= br + 1e-15 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            match best {
                Some((r, _)) => self.pivot(r, c),
                None => return Step::Unbounded,
            }
            if step % REFACTOR_EVERY == 0 {
                self.refactor();
            }
        }
        Step::Stalled
    }

    fn set_objective(&mut self, cost: Vec<f64>) {
        let width = self.width;
        self.z = vec![0.0; width + 1];
        for (j, &c) in cost.iter().enumerate() {
            self.z[j] = -c;
        }
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost.get(b).copied().unwrap_or(0.0);
            if cb != 0.0 {
                for j in 0..=width {
                    self.z[j] += cb * self.rows[i][j];
                }
            }
        }
        for &b in &self.basis {
            self.z[b] = 0.0;
        }
        self.cost = cost;
    }
}

/// Solves `lp` by the two-phase simplex method.
pub fn solve(lp: &LinearProgram) -> LpOutcome {
    let n = lp.objective.len();
    let m = lp.constraints.len();
    // Columns: originals, then one slack/surplus per inequality row, then
    // one artificial per Ge/Eq row.
    let mut flipped = vec![false; m];
    let mut rels = Vec::with_capacity(m);
    for (i, c) in lp.constraints.iter().enumerate() {
        debug_assert_eq!(c.coeffs.len(), n);
        let rel = if c.rhs < 0.0 {
            flipped[i] = true;
            match c.relation {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            }
        } else {
            c.relation
        };
        rels.push(rel);
    }
    let slack_count = rels.iter().filter(|r| **r != Relation::Eq).count();
    let art_count = rels.iter().filter(|r| **r != Relation::Le).count();
    let width = n + slack_count + art_count;
    let mut rows = vec![vec![0.0; width + 1]; m];
    let mut basis = vec![0; m];
    // Column holding +e_i in the initial tableau, used to read duals.
    let mut unit_col = vec![0; m];
    let mut next_slack = n;
    let mut next_art = n + slack_count;
    for (i, c) in lp.constraints.iter().enumerate() {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        for j in 0..n {
            rows[i][j] = sign * c.coeffs[j];
        }
        rows[i][width] = sign * c.rhs;
        match rels[i] {
            Relation::Le => {
                rows[i][next_slack] = 1.0;
                basis[i] = next_slack;
                unit_col[i] = next_slack;
                next_slack += 1;
            }
            Relation::Ge => {
                rows[i][next_slack] = -1.0;
                next_slack += 1;
                rows[i][next_art] = 1.0;
                basis[i] = next_art;
                unit_col[i] = next_art;
                next_art += 1;
            }
            Relation::Eq => {
                rows[i][next_art] = 1.0;
                basis[i] = next_art;
                unit_col[i] = next_art;
                next_art += 1;
            }
        }
    }
    let art_start = n + slack_count;
    let mut t = Tableau {
        original: rows.clone(),
        rows,
        z: Vec::new(),
        cost: Vec::new(),
        basis,
        width,
    };

    if art_count > 0 {
        let mut phase1 = vec![0.0; width];
        for c in phase1.iter_mut().skip(art_start) {
            *c = -1.0;
        }
        t.set_objective(phase1);
        match t.run(&vec![true; width]) {
            Step::Optimal => {}
            Step::Stalled | Step::Unbounded => return LpOutcome::Stalled,
        }
        t.refactor();
        let scale = 1.0 + lp.constraints.iter().map(|c| c.rhs.abs()).fold(0.0, f64::max);
        let infeasibility: f64 = (0..m)
            .filter(|&i| t.basis[i] >= art_start)
            .map(|i| t.rows[i][width])
            .sum();
        if infeasibility > FEAS_TOL * scale {
            return LpOutcome::Infeasible;
        }
        // Drive artificials out of the basis where possible. Their values
        // are within tolerance of zero and are set to exactly zero first.
        for i in 0..m {
            if t.basis[i] >= art_start {
                t.rows[i][width] = 0.0;
                let j = (0..art_start).max_by(|&a, &b| t.rows[i][a].abs().total_cmp(&t.rows[i][b].abs()));
                if let Some(j) = j.filter(|&j| t.rows[i][j].abs() > FEAS_TOL) {
                    t.pivot(i, j);
                }
            }
        }
    }

    let mut allowed = vec![true; width];
    for a in allowed.iter_mut().skip(art_start) {
        *a = false;
    }
    t.set_objective(lp.objective.clone());
    t.refactor();
    match t.run(&allowed) {
        Step::Optimal => {}
        Step::Unbounded => return LpOutcome::Unbounded,
        Step::Stalled => return LpOutcome::Stalled,
    }
    t.refactor();

    let mut x = vec![0.0; n];
    for (i, &b) in t.basis.iter().enumerate() {
        if b < n {
            x[b] = t.rows[i][width].max(0.0);
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let duals = (0..m)
        .map(|i| {
            let y = t.z[unit_col[i]];
            if flipped[i] {
                -y
            } else {
                y
            }
        })
        .collect();
    LpOutcome::Optimal(LpSolution { x, objective, duals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn le(c: &[f64], b: f64) -> Constraint {
        Constraint::new(c.to_vec(), Relation::Le, b)
    }

    #[test]
    fn textbook_maximization() {
        // max 3x + 5y, x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36
        let lp = LinearProgram {
            objective: vec![3.0, 5.0],
            constraints: vec![le(&[1.0, 0.0], 4.0), le(&[0.0, 2.0], 12.0), le(&[3.0, 2.0], 18.0)],
        };
        let s = solve(&lp).optimal().unwrap();
        assert!((s.objective - 36.0).abs() < 1e-12);
        assert!((s.x[0] - 2.0).abs() < 1e-12 && (s.x[1] - 6.0).abs() < 1e-12);
        // Dual objective equals the primal one.
        let dual: f64 = s.duals.iter().zip([4.0, 12.0, 18.0]).map(|(y, b)| y * b).sum();
        assert!((dual - 36.0).abs() < 1e-12);
        assert!(s.duals.iter().all(|&y| y >= -1e-12));
    }

    #[test]
    fn equality_and_ge_rows() {
        // max -x - y, x + y = 2, x >= 0.5 -> objective -2
        let lp = LinearProgram {
            objective: vec![-1.0, -1.0],
            constraints: vec![
                Constraint::new(vec![1.0, 1.0], Relation::Eq, 2.0),
                Constraint::new(vec![1.0, 0.0], Relation::Ge, 0.5),
            ],
        };
        let s = solve(&lp).optimal().unwrap();
        assert!((s.objective + 2.0).abs() < 1e-12);
        assert!(s.x[0] >= 0.5 - 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let lp = LinearProgram {
            objective: vec![1.0],
            constraints: vec![le(&[1.0], 1.0), Constraint::new(vec![1.0], Relation::Ge, 2.0)],
        };
        assert_eq!(solve(&lp), LpOutcome::Infeasible);
        let lp = LinearProgram {
            objective: vec![1.0, 0.0],
            constraints: vec![le(&[-1.0, 1.0], 1.0)],
        };
        assert_eq!(solve(&lp), LpOutcome::Unbounded);
    }

    #[test]
    fn negative_rhs_is_normalized() {
        // -x <= -3 is x >= 3; max -x -> -3
        let lp = LinearProgram {
            objective: vec![-1.0],
            constraints: vec![le(&[-1.0], -3.0)],
        };
        let s = solve(&lp).optimal().unwrap();
        assert!((s.x[0] - 3.0).abs() < 1e-12);
        assert!((s.duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundant_equalities() {
        let lp = LinearProgram {
            objective: vec![1.0, 2.0],
            constraints: vec![
                Constraint::new(vec![1.0, 1.0], Relation::Eq, 1.0),
                Constraint::new(vec![2.0, 2.0], Relation::Eq, 2.0),
            ],
        };
        let s = solve(&lp).optimal().unwrap();
        assert!((s.objective - 2.0).abs() < 1e-12);
    }
}
