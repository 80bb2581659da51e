//! Zero-sum reachability: turn-based and concurrent value iteration, and
//! the step-bounded variant.

use super::qualitative::{almost_sure_choices, blocking_column, qualitative_reach, Oriented};
use super::settings::{max_diff, per_state, EngineSettings};
use super::strategy::Strategy;
use super::{EngineError, ValueVector};
use crate::game::{Player, StateId, StateSet, TwoPlayerGame};
use crate::matrix::{prune_cols, solve_matrix_game, Matrix};
use crate::query::Optimum;

/// Values of a zero-sum run plus one strategy per side (index 0 is player 1).
#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSumResult {
    pub values: ValueVector,
    pub strategies: [Strategy; 2],
}

/// The side trying to reach the goal when player 1 optimizes in `optimum`.
pub(crate) fn reacher(optimum: Optimum) -> Player {
    match optimum {
        Optimum::Max => Player::One,
        Optimum::Min => Player::Two,
    }
}

fn dirac(n: usize, k: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    d[k] = 1.0;
    d
}

fn uniform(n: usize) -> Vec<f64> {
    vec![1.0 / n as f64; n]
}

/// Expected next value when the owner of `s` plays `a`.
fn owner_q(g: &TwoPlayerGame, s: StateId, owner: Player, a: usize, x: &[f64]) -> f64 {
    match owner {
        Player::One => g.transition(s, a, 0).expect(x),
        Player::Two => g.transition(s, 0, a).expect(x),
    }
}

fn tsg_backup(g: &TwoPlayerGame, s: StateId, maxer: Player, x: &[f64]) -> f64 {
    let owner = g.owner(s).expect("turn-based game");
    let qs = (0..g.num_actions(owner, s)).map(|a| owner_q(g, s, owner, a, x));
    if owner == maxer {
        qs.fold(f64::NEG_INFINITY, f64::max)
    } else {
        qs.fold(f64::INFINITY, f64::min)
    }
}

/// Matrix game at `s` with the maximizer's actions as rows.
pub(crate) fn oriented_matrix(v: Oriented<'_>, s: StateId, x: &[f64]) -> Matrix {
    Matrix::from_fn(v.rows(s), v.cols(s), |r, c| v.succ(s, r, c).expect(x))
}

fn seed(n: usize, prob1: &StateSet) -> Vec<f64> {
    (0..n).map(|s| if prob1.contains(s) { 1.0 } else { 0.0 }).collect()
}

fn converged(values: Vec<f64>, iterations: usize, residual: f64) -> ValueVector {
    ValueVector {
        values,
        iterations,
        residual,
        converged: true,
    }
}

fn turn_based_only(g: &TwoPlayerGame) -> Result<(), EngineError> {
    if g.is_turn_based() {
        Ok(())
    } else {
        Err(EngineError::WrongKind(
            "turn-based engine needs a turn-based game".into(),
        ))
    }
}

/// Reachability value iteration on a turn-based game. `optimum` is the
/// direction player 1 optimizes in; player 2 opposes.
pub fn tsg_zero_sum_reach(
    g: &TwoPlayerGame,
    goal: &StateSet,
    optimum: Optimum,
    settings: &EngineSettings,
) -> Result<ZeroSumResult, EngineError> {
    turn_based_only(g)?;
    settings.install(|| tsg_run(g, goal, reacher(optimum), settings))?
}

fn tsg_run(
    g: &TwoPlayerGame,
    goal: &StateSet,
    maxer: Player,
    settings: &EngineSettings,
) -> Result<ZeroSumResult, EngineError> {
    let n = g.num_states();
    let qual = qualitative_reach(g, goal, maxer);
    let unknown: Vec<bool> = (0..n)
        .map(|s| !qual.prob0.contains(s) && !qual.prob1.contains(s))
        .collect();
    let mut x = seed(n, &qual.prob1);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        let next = per_state(n, |s| if unknown[s] { tsg_backup(g, s, maxer, &x) } else { x[s] });
        residual = max_diff(&next, &x);
        x = next;
        iterations += 1;
        if residual <= settings.epsilon {
            break;
        }
    }
    if residual > settings.epsilon {
        return Err(EngineError::NotConverged { iterations, residual });
    }
    let strategies = tsg_strategies(g, goal, maxer, &qual.prob0, &qual.prob1, &x, settings.epsilon);
    Ok(ZeroSumResult {
        values: converged(x, iterations, residual),
        strategies,
    })
}

fn tsg_strategies(
    g: &TwoPlayerGame,
    goal: &StateSet,
    maxer: Player,
    prob0: &StateSet,
    prob1: &StateSet,
    x: &[f64],
    epsilon: f64,
) -> [Strategy; 2] {
    let n = g.num_states();
    let tol = (epsilon * 1e-3).max(1e-12);
    let q: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let o = g.owner(s).expect("turn-based game");
            (0..g.num_actions(o, s)).map(|a| owner_q(g, s, o, a, x)).collect()
        })
        .collect();
    let near = |s: StateId, pick_max: bool| -> Vec<bool> {
        let best = if pick_max {
            q[s].iter().copied().fold(f64::NEG_INFINITY, f64::max)
        } else {
            q[s].iter().copied().fold(f64::INFINITY, f64::min)
        };
        q[s].iter()
            .map(|&v| if pick_max { v >= best - tol } else { v <= best + tol })
            .collect()
    };
    let hits = |s: StateId, a: usize, set: &StateSet| {
        let o = g.owner(s).expect("turn-based game");
        let d = match o {
            Player::One => g.transition(s, a, 0),
            Player::Two => g.transition(s, 0, a),
        };
        d.support().any(|t| set.contains(t))
    };

    // Maximizer: almost-sure choices on prob1, then progress through
    // near-optimal actions, layer by layer.
    let mut max_choice: Vec<Option<usize>> = vec![None; n];
    let sure = almost_sure_choices(Oriented::new(g, maxer), goal, prob1);
    for s in prob1.iter() {
        if g.owner(s) == Some(maxer) {
            max_choice[s] = sure[s].as_ref().and_then(|d| d.iter().position(|&p| p > 0.0));
        }
    }
    let mut layer = prob1.clone();
    loop {
        let snap = layer.clone();
        let mut changed = false;
        for s in 0..n {
            if snap.contains(s) || prob0.contains(s) || x[s] <= 0.0 {
                continue;
            }
            let owner = g.owner(s).expect("turn-based game");
            if owner == maxer {
                let opt = near(s, true);
                if let Some(a) = (0..opt.len()).find(|&a| opt[a] && hits(s, a, &snap)) {
                    max_choice[s] = Some(a);
                    layer.insert(s);
                    changed = true;
                }
            } else {
                let opt = near(s, false);
                if (0..opt.len()).filter(|&a| opt[a]).all(|a| hits(s, a, &snap)) {
                    layer.insert(s);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }

    let oriented = Oriented::new(g, maxer);
    let positive = prob0.complement();
    let mut tables: [Vec<Vec<f64>>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    for s in 0..n {
        let owner = g.owner(s).expect("turn-based game");
        for side in [Player::One, Player::Two] {
            let k = g.num_actions(side, s);
            let d = if side != owner {
                dirac(k, 0)
            } else if side == maxer {
                let a = max_choice[s].unwrap_or_else(|| argmax_first(&q[s]));
                dirac(k, a)
            } else if prob0.contains(s) {
                dirac(k, blocking_column(oriented, s, &positive))
            } else {
                dirac(k, argmin_first(&q[s]))
            };
            tables[side.index()].push(d);
        }
    }
    let [t1, t2] = tables;
    [
        Strategy::memoryless(Player::One, t1),
        Strategy::memoryless(Player::Two, t2),
    ]
}

fn argmax_first(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b })
}

fn argmin_first(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |b, i| if v[i] < v[b] { i } else { b })
}

/// Reachability value iteration on a concurrent game, solving a matrix
/// game at every state in every sweep.
pub fn csg_zero_sum_reach(
    g: &TwoPlayerGame,
    goal: &StateSet,
    optimum: Optimum,
    settings: &EngineSettings,
) -> Result<ZeroSumResult, EngineError> {
    settings.install(|| csg_run(g, goal, reacher(optimum), settings))?
}

const POLISH_FACTOR: f64 = 1e-3;
const POLISH_FLOOR: f64 = 1e-13;

/// One Jacobi sweep over the undetermined states. The maximizer's mix is
/// kept from the last strict improvement (when `max_rows` is given), the
/// minimizer's from the latest sweep, pruned of support that only matters
/// within `tol`.
fn csg_sweep(
    v: Oriented<'_>,
    unknown: &[bool],
    x: &[f64],
    tol: f64,
    mut max_rows: Option<&mut [Option<Vec<f64>>]>,
    min_cols: &mut [Option<Vec<f64>>],
) -> Result<Vec<f64>, EngineError> {
    let solved = per_state(x.len(), |s| -> Result<Option<(f64, Vec<f64>, Vec<f64>)>, EngineError> {
        if !unknown[s] {
            return Ok(None);
        }
        let z = oriented_matrix(v, s, x);
        let sol = prune_cols(&z, solve_matrix_game(&z)?, tol);
        Ok(Some((sol.value.clamp(0.0, 1.0), sol.row, sol.col)))
    });
    let mut next = x.to_vec();
    for (s, r) in solved.into_iter().enumerate() {
        if let Some((value, row, col)) = r? {
            if let Some(rows) = max_rows.as_deref_mut() {
                if rows[s].is_none() || value > x[s] {
                    rows[s] = Some(row);
                }
            }
            min_cols[s] = Some(col);
            next[s] = value;
        }
    }
    Ok(next)
}

fn csg_run(
    g: &TwoPlayerGame,
    goal: &StateSet,
    maxer: Player,
    settings: &EngineSettings,
) -> Result<ZeroSumResult, EngineError> {
    let n = g.num_states();
    let v = Oriented::new(g, maxer);
    let qual = qualitative_reach(g, goal, maxer);
    let unknown: Vec<bool> = (0..n)
        .map(|s| !qual.prob0.contains(s) && !qual.prob1.contains(s))
        .collect();
    let mut x = seed(n, &qual.prob1);
    let mut max_rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut min_cols: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        let next = csg_sweep(v, &unknown, &x, settings.epsilon, Some(&mut max_rows), &mut min_cols)?;
        residual = max_diff(&next, &x);
        x = next;
        iterations += 1;
        if residual <= settings.epsilon {
            break;
        }
    }
    if residual > settings.epsilon {
        return Err(EngineError::NotConverged { iterations, residual });
    }
    // The minimizer's mix comes from a tighter iterate than the reported
    // values, so that pruning at `epsilon` separates round-off weights
    // from real ones. The maximizer's stays from the main phase: near the
    // fixpoint, increases are round-off and would select mixes that make
    // no progress. The budget is at most the sweeps already spent.
    let target = (settings.epsilon * POLISH_FACTOR).max(POLISH_FLOOR);
    let mut polished = x.clone();
    let mut polish_residual = residual;
    for _ in 0..iterations.min(settings.max_iterations) {
        if polish_residual <= target {
            break;
        }
        let next = csg_sweep(v, &unknown, &polished, settings.epsilon, None, &mut min_cols)?;
        polish_residual = max_diff(&next, &polished);
        polished = next;
    }

    let sure = almost_sure_choices(v, goal, &qual.prob1);
    let positive = qual.prob0.complement();
    let mut max_table = Vec::with_capacity(n);
    let mut min_table = Vec::with_capacity(n);
    for s in 0..n {
        let (rows, cols) = (v.rows(s), v.cols(s));
        let row = if qual.prob1.contains(s) {
            sure[s].clone().unwrap_or_else(|| uniform(rows))
        } else {
            max_rows[s].clone().unwrap_or_else(|| uniform(rows))
        };
        let col = if qual.prob0.contains(s) {
            dirac(cols, blocking_column(v, s, &positive))
        } else {
            min_cols[s].clone().unwrap_or_else(|| uniform(cols))
        };
        max_table.push(row);
        min_table.push(col);
    }
    let strategies = match maxer {
        Player::One => [
            Strategy::memoryless(Player::One, max_table),
            Strategy::memoryless(Player::Two, min_table),
        ],
        Player::Two => [
            Strategy::memoryless(Player::One, min_table),
            Strategy::memoryless(Player::Two, max_table),
        ],
    };
    Ok(ZeroSumResult {
        values: converged(x, iterations, residual),
        strategies,
    })
}

/// Turn-based engine when the game is turn-based, concurrent otherwise.
pub fn zero_sum_reach(
    g: &TwoPlayerGame,
    goal: &StateSet,
    optimum: Optimum,
    settings: &EngineSettings,
) -> Result<ZeroSumResult, EngineError> {
    if g.is_turn_based() {
        tsg_zero_sum_reach(g, goal, optimum, settings)
    } else {
        csg_zero_sum_reach(g, goal, optimum, settings)
    }
}

/// Exactly `k` sweeps of the reachability recurrence from the indicator
/// of `goal`, without precomputation or convergence test.
pub fn bounded_reach(
    g: &TwoPlayerGame,
    goal: &StateSet,
    k: u64,
    optimum: Optimum,
    settings: &EngineSettings,
) -> Result<ValueVector, EngineError> {
    let maxer = reacher(optimum);
    settings.install(|| {
        let n = g.num_states();
        let v = Oriented::new(g, maxer);
        let mut x = seed(n, goal);
        let mut residual = 0.0;
        for _ in 0..k {
            let next = per_state(n, |s| -> Result<f64, EngineError> {
                if goal.contains(s) {
                    Ok(1.0)
                } else if g.is_turn_based() {
                    Ok(tsg_backup(g, s, maxer, &x))
                } else {
                    Ok(solve_matrix_game(&oriented_matrix(v, s, &x))?.value.clamp(0.0, 1.0))
                }
            })
            .into_iter()
            .collect::<Result<Vec<f64>, EngineError>>()?;
            residual = max_diff(&next, &x);
            x = next;
        }
        Ok(ValueVector {
            values: x,
            iterations: k as usize,
            residual,
            converged: true,
        })
    })?
}
