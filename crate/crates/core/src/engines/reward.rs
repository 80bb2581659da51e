//! Expected cumulative reward until reaching a goal, optimized adversarially.

use super::qualitative::{almost_sure_set, Oriented};
use super::reach::ZeroSumResult;
use super::settings::{max_diff, per_state, EngineSettings};
use super::strategy::Strategy;
use super::{EngineError, ValueVector};
use crate::game::{Player, StateId, StateSet, TwoPlayerGame};
use crate::matrix::{prune_rows, solve_matrix_game, Matrix};
use crate::query::Optimum;

/// Expected reward `reward` accumulated before the first visit to `goal`.
///
/// The value is `+∞` wherever the reward-minimizing side cannot force the
/// goal almost surely. Elsewhere that side is restricted to actions that
/// keep the goal almost-surely reachable, and iteration runs downwards
/// from the cost of its uniform safe strategy, so zero-reward cycles that
/// never reach the goal cannot pull the value below the true cost.
pub fn zero_sum_expected_reward(
    g: &TwoPlayerGame,
    reward: &str,
    goal: &StateSet,
    optimum: Optimum,
    settings: &EngineSettings,
) -> Result<ZeroSumResult, EngineError> {
    if !g.has_reward(reward) {
        return Err(EngineError::UnknownReward(reward.to_string()));
    }
    if let Some((s, _, _)) = g.choices().find(|&(s, a, b)| !(g.reward(reward, s, a, b) >= 0.0)) {
        return Err(EngineError::NegativeReward {
            name: reward.to_string(),
            state: s,
        });
    }
    settings.install(|| run(g, reward, goal, optimum, settings))?
}

struct Setup<'a> {
    reward: &'a str,
    /// Rows: reward maximizer; columns: reward minimizer.
    v: Oriented<'a>,
    safe: Vec<Vec<usize>>,
    active: Vec<bool>,
}

impl Setup<'_> {
    /// Reward game at `s` with the minimizer restricted to safe columns.
    fn matrix(&self, s: StateId, x: &[f64]) -> Matrix {
        let cols = &self.safe[s];
        Matrix::from_fn(self.v.rows(s), cols.len(), |r, c| {
            self.v.reward(self.reward, s, r, cols[c]) + self.v.succ(s, r, cols[c]).expect(x)
        })
    }

    /// Value of `s` when the minimizer mixes uniformly over safe columns
    /// and the maximizer best-responds.
    fn uniform_backup(&self, s: StateId, x: &[f64]) -> f64 {
        let z = self.matrix(s, x);
        let w = 1.0 / z.cols() as f64;
        (0..z.rows())
            .map(|r| (0..z.cols()).map(|c| w * z.get(r, c)).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

fn run(
    g: &TwoPlayerGame,
    reward: &str,
    goal: &StateSet,
    optimum: Optimum,
    settings: &EngineSettings,
) -> Result<ZeroSumResult, EngineError> {
    let n = g.num_states();
    let minner = match optimum {
        Optimum::Min => Player::One,
        Optimum::Max => Player::Two,
    };
    let maxer = minner.other();
    let min_view = Oriented::new(g, minner);
    let finite = almost_sure_set(min_view, goal);
    let safe: Vec<Vec<usize>> = (0..n)
        .map(|s| {
            if finite.contains(s) {
                min_view.safe_rows(s, &finite)
            } else {
                Vec::new()
            }
        })
        .collect();
    let active: Vec<bool> = (0..n).map(|s| finite.contains(s) && !goal.contains(s)).collect();
    let setup = Setup {
        reward,
        v: Oriented::new(g, maxer),
        safe,
        active,
    };
    let fixed = |s: StateId| {
        if goal.contains(s) {
            0.0
        } else {
            f64::INFINITY
        }
    };
    let initial: Vec<f64> = (0..n).map(|s| if setup.active[s] { 0.0 } else { fixed(s) }).collect();

    // Upper bound: cost of the uniform safe strategy.
    let mut upper = initial;
    let mut iterations = 0;
    let mut residual = f64::INFINITY;
    while iterations < settings.max_iterations {
        let next = per_state(n, |s| {
            if setup.active[s] {
                setup.uniform_backup(s, &upper)
            } else {
                upper[s]
            }
        });
        residual = max_diff(&next, &upper);
        upper = next;
        iterations += 1;
        if residual <= settings.epsilon * 1e-3 {
            break;
        }
    }
    if residual > settings.epsilon * 1e-3 {
        return Err(EngineError::NotConverged { iterations, residual });
    }

    // Main iteration, decreasing from the upper bound.
    let mut min_choice: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let rows = min_view.rows(s);
            let safe = &setup.safe[s];
            if safe.is_empty() {
                return vec![1.0 / rows as f64; rows];
            }
            let mut d = vec![0.0; rows];
            for &a in safe {
                d[a] = 1.0 / safe.len() as f64;
            }
            d
        })
        .collect();
    let mut max_choice: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut x = upper;
    let mut main_iters = 0;
    residual = f64::INFINITY;
    while main_iters < settings.max_iterations {
        let solved = per_state(n, |s| -> Result<Option<(f64, Vec<f64>, Vec<f64>)>, EngineError> {
            if !setup.active[s] {
                return Ok(None);
            }
            let z = setup.matrix(s, &x);
            let sol = prune_rows(&z, solve_matrix_game(&z)?, settings.epsilon);
            Ok(Some((sol.value.max(0.0), sol.row, sol.col)))
        });
        let mut next = x.clone();
        for (s, r) in solved.into_iter().enumerate() {
            if let Some((value, row, col)) = r? {
                if value < x[s] {
                    let mut d = vec![0.0; min_view.rows(s)];
                    for (c, &a) in setup.safe[s].iter().enumerate() {
                        d[a] = col[c];
                    }
                    min_choice[s] = d;
                }
                max_choice[s] = Some(row);
                next[s] = value;
            }
        }
        residual = max_diff(&next, &x);
        x = next;
        main_iters += 1;
        if residual <= settings.epsilon {
            break;
        }
    }
    if residual > settings.epsilon {
        return Err(EngineError::NotConverged {
            iterations: iterations + main_iters,
            residual,
        });
    }

    if g.is_turn_based() {
        make_deterministic(&setup, g, minner, goal, &x, &mut min_choice, settings.epsilon);
    }
    let max_view = setup.v;
    let max_table: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let rows = max_view.rows(s);
            if let Some(d) = &max_choice[s] {
                return d.clone();
            }
            if !finite.contains(s) && max_view.cols(s) == 1 {
                // Leave the almost-sure region where possible.
                if let Some(a) = (0..rows).find(|&a| max_view.succ(s, a, 0).support().any(|t| !finite.contains(t))) {
                    let mut d = vec![0.0; rows];
                    d[a] = 1.0;
                    return d;
                }
            }
            vec![1.0 / rows as f64; rows]
        })
        .collect();
    let strategies = match minner {
        Player::One => [
            Strategy::memoryless(Player::One, min_choice),
            Strategy::memoryless(Player::Two, max_table),
        ],
        Player::Two => [
            Strategy::memoryless(Player::One, max_table),
            Strategy::memoryless(Player::Two, min_choice),
        ],
    };
    Ok(ZeroSumResult {
        values: ValueVector {
            values: x,
            iterations: iterations + main_iters,
            residual,
            converged: true,
        },
        strategies,
    })
}

/// Turn-based refinement: at the minimizer's states pick a single
/// near-optimal safe action that moves towards the goal, layer by layer
/// from the goal. States without such an action keep their mixed choice.
fn make_deterministic(
    setup: &Setup<'_>,
    g: &TwoPlayerGame,
    minner: Player,
    goal: &StateSet,
    x: &[f64],
    choice: &mut [Vec<f64>],
    tol: f64,
) {
    let n = g.num_states();
    let min_view = Oriented::new(g, minner);
    let mut layer = goal.clone();
    loop {
        let snap = layer.clone();
        let mut changed = false;
        for s in 0..n {
            if snap.contains(s) || !setup.active[s] {
                continue;
            }
            let hits = |d: &crate::game::Distribution| d.support().any(|t| snap.contains(t));
            if g.owner(s) == Some(minner) {
                let q: Vec<(usize, f64)> = setup.safe[s]
                    .iter()
                    .map(|&a| {
                        (
                            a,
                            min_view.reward(setup.reward, s, a, 0) + min_view.succ(s, a, 0).expect(x),
                        )
                    })
                    .collect();
                let best = q.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
                if let Some(&(a, _)) = q
                    .iter()
                    .find(|&&(a, v)| v <= best + tol && hits(min_view.succ(s, a, 0)))
                {
                    let mut d = vec![0.0; min_view.rows(s)];
                    d[a] = 1.0;
                    choice[s] = d;
                    layer.insert(s);
                    changed = true;
                }
            } else if (0..setup.v.rows(s)).all(|a| hits(setup.v.succ(s, a, 0))) {
                layer.insert(s);
                changed = true;
            }
        }
        if !changed {
            return;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::parse_game;
    use crate::game::{coalition_view, CoalitionSpec};

    fn view(text: &str) -> TwoPlayerGame {
        coalition_view(&parse_game(text).unwrap(), &CoalitionSpec::new([1])).unwrap()
    }

    #[test]
    fn unit_chain_costs_three() {
        let g = view(
            "game tsg\nplayers 1\nstates 4\ninit 0\nowner 1 1 1 1\n\
             actions 1 0 a\nactions 1 1 a\nactions 1 2 a\nactions 1 3 a\n\
             t 0 a : 1 1\nt 1 a : 1 2\nt 2 a : 1 3\nt 3 a : 1 3\nlabel goal 3\n\
             reward step 0 a 1\nreward step 1 a 1\nreward step 2 a 1\n",
        );
        let goal = g.label("goal").unwrap();
        let r = zero_sum_expected_reward(&g, "step", &goal, Optimum::Min, &EngineSettings::default()).unwrap();
        assert_eq!(r.values.values, vec![3.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn half_reach_is_infinite() {
        let g = view(
            "game tsg\nplayers 1\nstates 3\ninit 0\nowner 1 1 1\nactions 1 0 a\nactions 1 1 a\nactions 1 2 a\n\
             t 0 a : 1/2 1 1/2 2\nt 1 a : 1 1\nt 2 a : 1 2\nlabel goal 1\nreward r 0 a 1\n",
        );
        let goal = g.label("goal").unwrap();
        let r = zero_sum_expected_reward(&g, "r", &goal, Optimum::Min, &EngineSettings::default()).unwrap();
        assert!(r.values.values[0].is_infinite());
        assert_eq!(r.values.values[1], 0.0);
        assert!(matches!(
            zero_sum_expected_reward(&g, "nope", &goal, Optimum::Min, &EngineSettings::default()),
            Err(EngineError::UnknownReward(_))
        ));
    }

    #[test]
    fn free_loop_does_not_make_cost_zero() {
        let g = view(
            "game tsg\nplayers 1\nstates 2\ninit 0\nowner 1 1\nactions 1 0 loop pay\nactions 1 1 a\n\
             t 0 loop : 1 0\nt 0 pay : 1 1\nt 1 a : 1 1\nlabel goal 1\nreward r 0 pay 2\n",
        );
        let goal = g.label("goal").unwrap();
        let r = zero_sum_expected_reward(&g, "r", &goal, Optimum::Min, &EngineSettings::default()).unwrap();
        assert!((r.values.values[0] - 2.0).abs() < 1e-6);
        assert_eq!(r.strategies[0].action(0, 0), Some(1));
    }

    #[test]
    fn opponent_maximizes_cost() {
        // Player 2 picks a cheap or expensive route; player 1 minimizes.
        let g = view(
            "game tsg\nplayers 2\nstates 3\ninit 0\nowner 1 2 1\nactions 1 0 go\nactions 2 1 cheap dear\nactions 1 2 a\n\
             t 0 go : 1 1\nt 1 cheap : 1 2\nt 1 dear : 1 2\nt 2 a : 1 2\nlabel goal 2\n\
             reward r 0 go 1\nreward r 1 cheap 1\nreward r 1 dear 5\n",
        );
        let goal = g.label("goal").unwrap();
        let r = zero_sum_expected_reward(&g, "r", &goal, Optimum::Min, &EngineSettings::default()).unwrap();
        assert_eq!(r.values.values, vec![6.0, 5.0, 0.0]);
        let r = zero_sum_expected_reward(&g, "r", &goal, Optimum::Max, &EngineSettings::default()).unwrap();
        // Player 1 maximizing, player 2 minimizing.
        assert_eq!(r.values.values, vec![2.0, 1.0, 0.0]);
    }
}
