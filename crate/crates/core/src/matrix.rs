//! One-shot game solvers: zero-sum matrix games, bimatrix Nash equilibria
//! and correlated equilibria.

use thiserror::Error;

use crate::linalg::solve_square;
use crate::lp::{self, Constraint, LinearProgram, Relation};

/// Tolerance for equilibrium checks and comparisons at this layer.
pub const GAME_TOL: f64 = 1e-7;
/// Largest dimension accepted by [`solve_bimatrix_all_ne`].
pub const MAX_NE_DIM: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Criterion {
    SocialWelfare,
    SocialFairness,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatrixError {
    #[error("matrix must have at least one row and one column")]
    Empty,
    #[error("rows have different lengths")]
    Ragged,
    #[error("matrix entry ({row}, {col}) is not finite")]
    NonFinite { row: usize, col: usize },
    #[error("payoff matrices have different shapes")]
    ShapeMismatch,
    #[error("{rows}x{cols} game exceeds the {limit}x{limit} bound for equilibrium enumeration")]
    TooLarge { rows: usize, cols: usize, limit: usize },
    #[error("no equilibrium profiles to select from")]
    NoProfiles,
    #[error("linear program failed to solve")]
    Numerical,
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, MatrixError> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if m == 0 || n == 0 {
            return Err(MatrixError::Empty);
        }
        if rows.iter().any(|r| r.len() != n) {
            return Err(MatrixError::Ragged);
        }
        let mat = Matrix {
            rows: m,
            cols: n,
            data: rows.concat(),
        };
        mat.check()?;
        Ok(mat)
    }

    fn check(&self) -> Result<(), MatrixError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(MatrixError::Empty);
        }
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(k) => Err(MatrixError::NonFinite {
                row: k / self.cols,
                col: k % self.cols,
            }),
            None => Ok(()),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `(Z q)_i` for every row.
    pub fn row_payoffs(&self, q: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self.get(i, j) * q[j]).sum())
            .collect()
    }

    /// `(p Z)_j` for every column.
    pub fn col_payoffs(&self, p: &[f64]) -> Vec<f64> {
        (0..self.cols)
            .map(|j| (0..self.rows).map(|i| p[i] * self.get(i, j)).sum())
            .collect()
    }

    /// `p Z q`.
    pub fn bilinear(&self, p: &[f64], q: &[f64]) -> f64 {
        p.iter().zip(self.row_payoffs(q)).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixSolution {
    pub value: f64,
    /// Maximizing row strategy.
    pub row: Vec<f64>,
    /// Minimizing column strategy.
    pub col: Vec<f64>,
}

fn dirac(n: usize, k: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[k] = 1.0;
    v
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    for x in v.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        for x in v.iter_mut() {
            *x /= s;
        }
    }
    v
}

fn argmax_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn argmin_first(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

/// Value and optimal strategies of the zero-sum game `z` (rows maximize).
pub fn solve_matrix_game(z: &Matrix) -> Result<MatrixSolution, MatrixError> {
    z.check()?;
    let (m, n) = (z.rows, z.cols);
    if m == 1 {
        let row: Vec<f64> = (0..n).map(|j| z.get(0, j)).collect();
        let b = argmin_first(&row);
        return Ok(MatrixSolution {
            value: row[b],
            row: vec![1.0],
            col: dirac(n, b),
        });
    }
    if n == 1 {
        let col: Vec<f64> = (0..m).map(|i| z.get(i, 0)).collect();
        let a = argmax_first(&col);
        return Ok(MatrixSolution {
            value: col[a],
            row: dirac(m, a),
            col: vec![1.0],
        });
    }
    // Map entries affinely onto [1, 2], then max sum(w) s.t. Z' w <= 1,
    // w >= 0. Scaling by the range keeps nearly constant matrices (late
    // value-iteration sweeps) resolvable by the simplex tolerances.
    let (lo, hi) = (z.min(), z.data.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let range = hi - lo;
    if range == 0.0 {
        return Ok(MatrixSolution {
            value: lo,
            row: dirac(m, 0),
            col: dirac(n, 0),
        });
    }
    let lp = LinearProgram {
        objective: vec![1.0; n],
        constraints: (0..m)
            .map(|i| {
                Constraint::new(
                    (0..n).map(|j| 1.0 + (z.get(i, j) - lo) / range).collect(),
                    Relation::Le,
                    1.0,
                )
            })
            .collect(),
    };
    let sol = lp::solve(&lp).optimal().ok_or(MatrixError::Numerical)?;
    let total: f64 = sol.x.iter().sum();
    if total <= 0.0 {
        return Err(MatrixError::Numerical);
    }
    let shifted_value = 1.0 / total;
    let col = normalize(sol.x.iter().map(|w| w * shifted_value).collect());
    let row = normalize(sol.duals.iter().map(|u| u * shifted_value).collect());
    // The strategies bracket the value; trust them over the objective,
    // which carries the simplex's rounding.
    let lower = z.col_payoffs(&row).into_iter().fold(f64::INFINITY, f64::min);
    let upper = z.row_payoffs(&col).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let value = lo + (shifted_value - 1.0) * range;
    let value = if lower <= upper {
        value.clamp(lower, upper)
    } else {
        0.5 * (lower + upper)
    };
    Ok(MatrixSolution { value, row, col })
}

/// `max_a (Z q)_a - min_b (p Z)_b`: zero exactly when `(p, q)` is optimal.
pub fn duality_gap(z: &Matrix, sol: &MatrixSolution) -> f64 {
    let upper = z.row_payoffs(&sol.col).into_iter().fold(f64::NEG_INFINITY, f64::max);
    let lower = z.col_payoffs(&sol.row).into_iter().fold(f64::INFINITY, f64::min);
    upper - lower
}

/// Drops `v`'s smallest weights one at a time, renormalizing, as long as
/// `worst(v)` stays at least `floor`.
fn prune(v: &[f64], floor: f64, worst: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).filter(|&i| v[i] > 0.0).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]).then(a.cmp(&b)));
    let mut cur = v.to_vec();
    for &i in order.iter().take(order.len().saturating_sub(1)) {
        let mut trial = cur.clone();
        trial[i] = 0.0;
        let trial = normalize(trial);
        if worst(&trial) >= floor {
            cur = trial;
        }
    }
    cur
}

/// Removes row support that only matters within `tol` of the value: the
/// pruned mix still guarantees `value - tol`. Near-converged iterates make
/// the LP put tiny weights on actions that are clearly bad at the limit,
/// and repeated around a cycle such weights are exploitable.
pub fn prune_rows(z: &Matrix, sol: MatrixSolution, tol: f64) -> MatrixSolution {
    let row = prune(&sol.row, sol.value - tol, |p| {
        z.col_payoffs(p).into_iter().fold(f64::INFINITY, f64::min)
    });
    MatrixSolution { row, ..sol }
}

/// Column counterpart of [`prune_rows`]: the pruned mix still holds the
/// row player to `value + tol`.
pub fn prune_cols(z: &Matrix, sol: MatrixSolution, tol: f64) -> MatrixSolution {
    let col = prune(&sol.col, -sol.value - tol, |q| {
        -z.row_payoffs(q).into_iter().fold(f64::NEG_INFINITY, f64::max)
    });
    MatrixSolution { col, ..sol }
}

/// Two-player one-shot game where both players maximize their own matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BimatrixGame {
    pub z1: Matrix,
    pub z2: Matrix,
}

impl BimatrixGame {
    pub fn new(z1: Matrix, z2: Matrix) -> Result<Self, MatrixError> {
        z1.check()?;
        z2.check()?;
        if z1.rows != z2.rows || z1.cols != z2.cols {
            return Err(MatrixError::ShapeMismatch);
        }
        Ok(BimatrixGame { z1, z2 })
    }

    pub fn rows(&self) -> usize {
        self.z1.rows
    }

    pub fn cols(&self) -> usize {
        self.z1.cols
    }

    pub fn payoffs(&self, p: &[f64], q: &[f64]) -> (f64, f64) {
        (self.z1.bilinear(p, q), self.z2.bilinear(p, q))
    }

    /// Largest gain either player obtains from a pure deviation.
    pub fn regret(&self, p: &[f64], q: &[f64]) -> (f64, f64) {
        let (u1, u2) = self.payoffs(p, q);
        let best1 = self.z1.row_payoffs(q).into_iter().fold(f64::NEG_INFINITY, f64::max);
        let best2 = self.z2.col_payoffs(p).into_iter().fold(f64::NEG_INFINITY, f64::max);
        (best1 - u1, best2 - u2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixedProfile {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub payoffs: (f64, f64),
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Mixed strategy of the "mover" on `own` that makes the opponent
/// indifferent over `other`, where `payoff(mover_action, other_action)` is
/// the opponent's payoff. Square systems are solved directly.
fn indifference(payoff: &dyn Fn(usize, usize) -> f64, own: &[usize], other: &[usize], size: usize) -> Option<Vec<f64>> {
    let k = own.len();
    let mut a = vec![vec![0.0; k + 1]; k + 1];
    let mut b = vec![0.0; k + 1];
    for (r, &o) in other.iter().enumerate() {
        for (c, &i) in own.iter().enumerate() {
            a[r][c] = payoff(i, o);
        }
        a[r][k] = -1.0;
    }
    for c in 0..k {
        a[k][c] = 1.0;
    }
    b[k] = 1.0;
    let x = solve_square(a, b)?;
    let mut full = vec![0.0; size];
    for (c, &i) in own.iter().enumerate() {
        if x[c] < -GAME_TOL {
            return None;
        }
        full[i] = x[c];
    }
    Some(normalize(full))
}

/// Feasibility LP: a strategy on `own` under which every action in
/// `other` attains the opponent's best payoff among all its actions.
fn indifference_lp(
    payoff: &dyn Fn(usize, usize) -> f64,
    own: &[usize],
    other: &[usize],
    size: usize,
    other_size: usize,
) -> Option<Vec<f64>> {
    let k = own.len();
    let mut lo = f64::INFINITY;
    for &i in own {
        for o in 0..other_size {
            lo = lo.min(payoff(i, o));
        }
    }
    let shift = 1.0 - lo;
    // Variables: x_own (k), u (best payoff, positive after the shift).
    let mut constraints = Vec::new();
    for o in 0..other_size {
        let mut c: Vec<f64> = own.iter().map(|&i| payoff(i, o) + shift).collect();
        c.push(-1.0);
        let rel = if other.contains(&o) { Relation::Eq } else { Relation::Le };
        constraints.push(Constraint::new(c, rel, 0.0));
    }
    let mut sum = vec![1.0; k];
    sum.push(0.0);
    constraints.push(Constraint::new(sum, Relation::Eq, 1.0));
    let lp = LinearProgram {
        objective: vec![0.0; k + 1],
        constraints,
    };
    let sol = lp::solve(&lp).optimal()?;
    let mut full = vec![0.0; size];
    for (c, &i) in own.iter().enumerate() {
        full[i] = sol.x[c];
    }
    Some(normalize(full))
}

fn inf_dist(a: &MixedProfile, b: &MixedProfile) -> f64 {
    a.p.iter()
        .zip(&b.p)
        .chain(a.q.iter().zip(&b.q))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

fn push_profile(g: &BimatrixGame, p: Vec<f64>, q: Vec<f64>, out: &mut Vec<MixedProfile>) {
    let (r1, r2) = g.regret(&p, &q);
    if r1 > GAME_TOL || r2 > GAME_TOL {
        return;
    }
    let profile = MixedProfile {
        payoffs: g.payoffs(&p, &q),
        p,
        q,
    };
    if !out.iter().any(|o| inf_dist(o, &profile) <= GAME_TOL) {
        out.push(profile);
    }
}

/// Nash equilibria of `g` by support enumeration.
///
/// Equal-size support pairs are tried first; singular indifference
/// systems fall back to a feasibility LP. For nondegenerate games this
/// yields every equilibrium. If nothing is found (possible only for
/// degenerate games) all support pairs are searched by LP, which always
/// succeeds.
pub fn solve_bimatrix_all_ne(g: &BimatrixGame) -> Result<Vec<MixedProfile>, MatrixError> {
    let (m, n) = (g.rows(), g.cols());
    if m > MAX_NE_DIM || n > MAX_NE_DIM {
        return Err(MatrixError::TooLarge {
            rows: m,
            cols: n,
            limit: MAX_NE_DIM,
        });
    }
    // Player 1's mix p makes player 2 indifferent; player 2's mix q makes
    // player 1 indifferent.
    let pay2 = |i: usize, j: usize| g.z2.get(i, j);
    let pay1 = |j: usize, i: usize| g.z1.get(i, j);
    let mut out = Vec::new();
    for k in 1..=m.min(n) {
        let rows = subsets(m, k);
        let cols = subsets(n, k);
        for rs in &rows {
            for cs in &cols {
                let p = indifference(&pay2, rs, cs, m).or_else(|| indifference_lp(&pay2, rs, cs, m, n));
                let Some(p) = p else { continue };
                let q = indifference(&pay1, cs, rs, n).or_else(|| indifference_lp(&pay1, cs, rs, n, m));
                let Some(q) = q else { continue };
                push_profile(g, p, q, &mut out);
            }
        }
    }
    if out.is_empty() {
        for kr in 1..=m {
            for kc in 1..=n {
                if kr == kc {
                    continue;
                }
                for rs in &subsets(m, kr) {
                    for cs in &subsets(n, kc) {
                        let Some(p) = indifference_lp(&pay2, rs, cs, m, n) else {
                            continue;
                        };
                        let Some(q) = indifference_lp(&pay1, cs, rs, n, m) else {
                            continue;
                        };
                        push_profile(g, p, q, &mut out);
                    }
                }
            }
        }
    }
    Ok(out)
}

fn lex_cmp(a: &MixedProfile, b: &MixedProfile) -> std::cmp::Ordering {
    for (x, y) in a.p.iter().chain(&a.q).zip(b.p.iter().chain(&b.q)) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => {}
            other => return other,
        }
    }
    std::cmp::Ordering::Equal
}

/// Picks one profile by `criterion`; ties go to the larger payoff sum, then
/// to the lexicographically smallest `(p, q)`.
pub fn select_equilibrium(profiles: &[MixedProfile], criterion: Criterion) -> Result<MixedProfile, MatrixError> {
    if profiles.is_empty() {
        return Err(MatrixError::NoProfiles);
    }
    let sum = |p: &MixedProfile| p.payoffs.0 + p.payoffs.1;
    let diff = |p: &MixedProfile| (p.payoffs.0 - p.payoffs.1).abs();
    let candidates: Vec<&MixedProfile> = match criterion {
        Criterion::SocialWelfare => {
            let best = profiles.iter().map(sum).fold(f64::NEG_INFINITY, f64::max);
            profiles.iter().filter(|p| sum(p) >= best - GAME_TOL).collect()
        }
        Criterion::SocialFairness => {
            let best = profiles.iter().map(diff).fold(f64::INFINITY, f64::min);
            profiles.iter().filter(|p| diff(p) <= best + GAME_TOL).collect()
        }
    };
    let top = candidates.iter().map(|p| sum(p)).fold(f64::NEG_INFINITY, f64::max);
    let chosen = candidates
        .into_iter()
        .filter(|p| sum(p) >= top - GAME_TOL)
        .min_by(|a, b| lex_cmp(a, b))
        .expect("nonempty");
    Ok(chosen.clone())
}

/// Distribution over the `rows × cols` joint action cells, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    pub rows: usize,
    pub cols: usize,
    pub probs: Vec<f64>,
}

impl JointDistribution {
    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.probs[a * self.cols + b]
    }

    /// Marginal over rows.
    pub fn row_marginal(&self) -> Vec<f64> {
        (0..self.rows)
            .map(|a| (0..self.cols).map(|b| self.get(a, b)).sum())
            .collect()
    }

    /// Marginal over columns.
    pub fn col_marginal(&self) -> Vec<f64> {
        (0..self.cols)
            .map(|b| (0..self.rows).map(|a| self.get(a, b)).sum())
            .collect()
    }

    pub fn product(p: &[f64], q: &[f64]) -> Self {
        JointDistribution {
            rows: p.len(),
            cols: q.len(),
            probs: p.iter().flat_map(|a| q.iter().map(move |b| a * b)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelatedSolution {
    pub joint: JointDistribution,
    pub payoffs: (f64, f64),
}

fn ce_constraints(g: &BimatrixGame, extra: usize) -> Vec<Constraint> {
    let (m, n) = (g.rows(), g.cols());
    let width = m * n + extra;
    let mut out = Vec::new();
    for a in 0..m {
        for a2 in 0..m {
            if a == a2 {
                continue;
            }
            let mut c = vec![0.0; width];
            for b in 0..n {
                c[a * n + b] = g.z1.get(a, b) - g.z1.get(a2, b);
            }
            out.push(Constraint::new(c, Relation::Ge, 0.0));
        }
    }
    for b in 0..n {
        for b2 in 0..n {
            if b == b2 {
                continue;
            }
            let mut c = vec![0.0; width];
            for a in 0..m {
                c[a * n + b] = g.z2.get(a, b) - g.z2.get(a, b2);
            }
            out.push(Constraint::new(c, Relation::Ge, 0.0));
        }
    }
    let mut total = vec![1.0; m * n];
    total.resize(width, 0.0);
    out.push(Constraint::new(total, Relation::Eq, 1.0));
    out
}

/// Largest violation of the correlated-equilibrium incentive constraints.
pub fn ce_violation(g: &BimatrixGame, joint: &JointDistribution) -> f64 {
    let mut worst: f64 = 0.0;
    for c in ce_constraints(g, 0) {
        if c.relation == Relation::Ge {
            let lhs: f64 = c.coeffs.iter().zip(&joint.probs).map(|(a, x)| a * x).sum();
            worst = worst.max(-lhs);
        }
    }
    worst
}

/// A correlated equilibrium of `g` optimal for `criterion`. Fairness is
/// lexicographic: minimize the payoff difference, then maximize the sum.
pub fn solve_correlated_eq(g: &BimatrixGame, criterion: Criterion) -> Result<CorrelatedSolution, MatrixError> {
    let (m, n) = (g.rows(), g.cols());
    let cells = m * n;
    let sum_coeffs: Vec<f64> = (0..cells).map(|k| g.z1.data[k] + g.z2.data[k]).collect();
    let diff_coeffs: Vec<f64> = (0..cells).map(|k| g.z1.data[k] - g.z2.data[k]).collect();
    let x = match criterion {
        Criterion::SocialWelfare => {
            let lp = LinearProgram {
                objective: sum_coeffs,
                constraints: ce_constraints(g, 0),
            };
            lp::solve(&lp).optimal().ok_or(MatrixError::Numerical)?.x
        }
        Criterion::SocialFairness => {
            // Extra variable d >= |E1 - E2|.
            let mut constraints = ce_constraints(g, 1);
            let mut up: Vec<f64> = diff_coeffs.iter().map(|c| -c).collect();
            up.push(1.0);
            constraints.push(Constraint::new(up, Relation::Ge, 0.0));
            let mut down = diff_coeffs.clone();
            down.push(1.0);
            constraints.push(Constraint::new(down, Relation::Ge, 0.0));
            let mut objective = vec![0.0; cells];
            objective.push(-1.0);
            let first = lp::solve(&LinearProgram { objective, constraints })
                .optimal()
                .ok_or(MatrixError::Numerical)?;
            let bound = first.x[cells] + 1e-9;
            let mut constraints = ce_constraints(g, 0);
            constraints.push(Constraint::new(diff_coeffs.clone(), Relation::Le, bound));
            constraints.push(Constraint::new(diff_coeffs.clone(), Relation::Ge, -bound));
            lp::solve(&LinearProgram {
                objective: sum_coeffs,
                constraints,
            })
            .optimal()
            .ok_or(MatrixError::Numerical)?
            .x
        }
    };
    let joint = JointDistribution {
        rows: m,
        cols: n,
        probs: normalize(x),
    };
    let payoffs = (
        joint.probs.iter().zip(&g.z1.data).map(|(a, b)| a * b).sum(),
        joint.probs.iter().zip(&g.z2.data).map(|(a, b)| a * b).sum(),
    );
    Ok(CorrelatedSolution { joint, payoffs })
}
