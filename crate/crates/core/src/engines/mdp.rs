//! Explicit MDP solver: the maximal-reachability engine on the joint-action
//! view of a game, and the workhorse behind best-response certificates.

use super::settings::{max_diff, per_state, EngineSettings};
use super::{EngineError, ValueVector};
use crate::game::{StateSet, TwoPlayerGame};

/// Largest number of undecided states solved exactly.
const EXACT_LIMIT: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Choice {
    pub succ: Vec<(usize, f64)>,
    pub reward: f64,
}

/// Every state has at least one choice.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Mdp {
    pub choices: Vec<Vec<Choice>>,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Solved {
    pub values: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

impl Choice {
    fn expect(&self, x: &[f64]) -> f64 {
        self.succ.iter().map(|&(t, p)| p * x[t]).sum()
    }

    fn hits(&self, set: &[bool]) -> bool {
        self.succ.iter().any(|&(t, _)| set[t])
    }

    fn inside(&self, set: &[bool]) -> bool {
        self.succ.iter().all(|&(t, _)| set[t])
    }
}

impl Mdp {
    pub fn len(&self) -> usize {
        self.choices.len()
    }

    /// Every joint action of `g` becomes a choice.
    pub fn joint(g: &TwoPlayerGame, reward: Option<&str>) -> Mdp {
        let mut choices = vec![Vec::new(); g.num_states()];
        for (s, a, b) in g.choices() {
            choices[s].push(Choice {
                succ: g.transition(s, a, b).entries().to_vec(),
                reward: reward.map_or(0.0, |r| g.reward(r, s, a, b)),
            });
        }
        Mdp { choices }
    }

    /// `μR. base ∪ {s ∈ within : pred(s, R)}`.
    fn least(&self, base: &[bool], within: &[bool], pred: impl Fn(&[Choice], &[bool]) -> bool) -> Vec<bool> {
        let mut r: Vec<bool> = base.iter().zip(within).map(|(a, b)| *a && *b).collect();
        loop {
            let snap = r.clone();
            let mut changed = false;
            for s in 0..self.len() {
                if !snap[s] && within[s] && pred(&self.choices[s], &snap) {
                    r[s] = true;
                    changed = true;
                }
            }
            if !changed {
                return r;
            }
        }
    }

    /// States where some strategy reaches `goal` with positive probability.
    pub fn reach_exists(&self, goal: &[bool]) -> Vec<bool> {
        self.least(goal, &vec![true; self.len()], |cs, r| cs.iter().any(|c| c.hits(r)))
    }

    /// States where every strategy reaches `goal` with positive probability.
    pub fn reach_forall(&self, goal: &[bool]) -> Vec<bool> {
        self.least(goal, &vec![true; self.len()], |cs, r| cs.iter().all(|c| c.hits(r)))
    }

    /// States where some strategy reaches `goal` almost surely.
    pub fn prob1_exists(&self, goal: &[bool]) -> Vec<bool> {
        let mut c = vec![true; self.len()];
        loop {
            let cur = c.clone();
            let next = self.least(goal, &cur, |cs, r| cs.iter().any(|ch| ch.inside(&cur) && ch.hits(r)));
            if next == c {
                return c;
            }
            c = next;
        }
    }

    /// States where every strategy reaches `goal` almost surely.
    pub fn prob1_forall(&self, goal: &[bool]) -> Vec<bool> {
        let avoid: Vec<bool> = self.reach_forall(goal).iter().map(|b| !b).collect();
        let non_goal: Vec<bool> = goal.iter().map(|b| !b).collect();
        let escape = self.least(&avoid, &non_goal, |cs, r| cs.iter().any(|c| c.hits(r)));
        escape.iter().map(|b| !b).collect()
    }

    fn backup(
        &self,
        x: &[f64],
        fixed: &[Option<f64>],
        maximize: bool,
        rewards: bool,
        allowed: Option<&[Vec<bool>]>,
    ) -> Vec<f64> {
        per_state(self.len(), |s| {
            if let Some(v) = fixed[s] {
                return v;
            }
            let mut best = if maximize { f64::NEG_INFINITY } else { f64::INFINITY };
            for (k, c) in self.choices[s].iter().enumerate() {
                if allowed.is_some_and(|a| !a[s][k]) {
                    continue;
                }
                let q = if rewards { c.reward + c.expect(x) } else { c.expect(x) };
                best = if maximize { best.max(q) } else { best.min(q) };
            }
            best
        })
    }

    fn iterate(
        &self,
        mut x: Vec<f64>,
        fixed: &[Option<f64>],
        maximize: bool,
        rewards: bool,
        allowed: Option<&[Vec<bool>]>,
        epsilon: f64,
        max_iterations: usize,
    ) -> Result<Solved, EngineError> {
        let mut residual = f64::INFINITY;
        for k in 1..=max_iterations {
            let next = self.backup(&x, fixed, maximize, rewards, allowed);
            residual = max_diff(&next, &x);
            x = next;
            if residual <= epsilon {
                return Ok(Solved {
                    values: x,
                    iterations: k,
                    residual,
                });
            }
        }
        Err(EngineError::NotConverged {
            iterations: max_iterations,
            residual,
        })
    }

    /// Optimal probability of reaching `goal`.
    pub fn reach(
        &self,
        goal: &[bool],
        maximize: bool,
        epsilon: f64,
        max_iterations: usize,
    ) -> Result<Solved, EngineError> {
        let n = self.len();
        let (zero, one) = if maximize {
            let pos = self.reach_exists(goal);
            (pos.iter().map(|b| !b).collect::<Vec<_>>(), self.prob1_exists(goal))
        } else {
            let pos = self.reach_forall(goal);
            (pos.iter().map(|b| !b).collect::<Vec<_>>(), self.prob1_forall(goal))
        };
        let fixed: Vec<Option<f64>> = (0..n)
            .map(|s| {
                if one[s] {
                    Some(1.0)
                } else if zero[s] {
                    Some(0.0)
                } else {
                    None
                }
            })
            .collect();
        let x0: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        self.iterate(x0, &fixed, maximize, false, None, epsilon, max_iterations)
    }

    /// Optimal expected reward accumulated until `goal`; `+∞` where the
    /// goal is not reached almost surely under the optimizing strategy.
    pub fn total_reward(
        &self,
        goal: &[bool],
        maximize: bool,
        epsilon: f64,
        max_iterations: usize,
    ) -> Result<Solved, EngineError> {
        let n = self.len();
        let finite = if maximize {
            self.prob1_forall(goal)
        } else {
            self.prob1_exists(goal)
        };
        let fixed: Vec<Option<f64>> = (0..n)
            .map(|s| {
                if goal[s] {
                    Some(0.0)
                } else if !finite[s] {
                    Some(f64::INFINITY)
                } else {
                    None
                }
            })
            .collect();
        if maximize {
            let x0: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
            return self.iterate(x0, &fixed, true, true, None, epsilon, max_iterations);
        }
        // Minimizing: only choices that stay in the finite region, iterating
        // down from the cost of a proper strategy.
        let allowed: Vec<Vec<bool>> = self
            .choices
            .iter()
            .map(|cs| cs.iter().map(|c| c.inside(&finite)).collect())
            .collect();
        let proper = self.progress_policy(goal, &finite);
        let single: Vec<Vec<bool>> = (0..n)
            .map(|s| (0..self.choices[s].len()).map(|k| k == proper[s]).collect())
            .collect();
        let x0: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        let upper = self.iterate(x0, &fixed, true, true, Some(&single), epsilon * 1e-3, max_iterations)?;
        let mut solved = self.iterate(
            upper.values,
            &fixed,
            false,
            true,
            Some(&allowed),
            epsilon,
            max_iterations,
        )?;
        solved.iterations += upper.iterations;
        Ok(solved)
    }

    /// Exact optimal reachability by policy iteration with dense solves, or
    /// `None` when the MDP is too large or a system is singular.
    pub fn reach_exact(&self, goal: &[bool], maximize: bool) -> Option<Vec<f64>> {
        let n = self.len();
        let (zero, one) = if maximize {
            (
                self.reach_exists(goal).iter().map(|b| !b).collect::<Vec<_>>(),
                self.prob1_exists(goal),
            )
        } else {
            (
                self.reach_forall(goal).iter().map(|b| !b).collect::<Vec<_>>(),
                self.prob1_forall(goal),
            )
        };
        let fixed: Vec<Option<f64>> = (0..n)
            .map(|s| match (one[s], zero[s]) {
                (true, _) => Some(1.0),
                (_, true) => Some(0.0),
                _ => None,
            })
            .collect();
        // Start from a policy that leaves the undecided states surely.
        let settled: Vec<bool> = fixed.iter().map(Option::is_some).collect();
        let start = self.progress_policy(&settled, &vec![true; n]);
        self.policy_iteration(&fixed, start, maximize, false, None)
    }

    /// Exact optimal total reward, as [`Mdp::total_reward`], by policy
    /// iteration; `None` when too large or singular.
    pub fn total_reward_exact(&self, goal: &[bool], maximize: bool) -> Option<Vec<f64>> {
        let n = self.len();
        let finite = if maximize {
            self.prob1_forall(goal)
        } else {
            self.prob1_exists(goal)
        };
        let fixed: Vec<Option<f64>> = (0..n)
            .map(|s| {
                if goal[s] {
                    Some(0.0)
                } else if !finite[s] {
                    Some(f64::INFINITY)
                } else {
                    None
                }
            })
            .collect();
        if maximize {
            return self.policy_iteration(&fixed, vec![0; n], true, true, None);
        }
        let allowed: Vec<Vec<bool>> = self
            .choices
            .iter()
            .map(|cs| cs.iter().map(|c| c.inside(&finite)).collect())
            .collect();
        let start = self.progress_policy(goal, &finite);
        self.policy_iteration(&fixed, start, false, true, Some(&allowed))
    }

    /// Values of the deterministic `policy` with `fixed` states pinned.
    fn evaluate(&self, policy: &[usize], fixed: &[Option<f64>], rewards: bool) -> Option<Vec<f64>> {
        let free: Vec<usize> = (0..self.len()).filter(|&s| fixed[s].is_none()).collect();
        let mut slot = vec![usize::MAX; self.len()];
        for (i, &s) in free.iter().enumerate() {
            slot[s] = i;
        }
        let m = free.len();
        let mut a = vec![vec![0.0; m]; m];
        let mut b = vec![0.0; m];
        for (i, &s) in free.iter().enumerate() {
            let c = &self.choices[s][policy[s]];
            a[i][i] += 1.0;
            if rewards {
                b[i] += c.reward;
            }
            for &(t, p) in &c.succ {
                match fixed[t] {
                    Some(v) if p > 0.0 => b[i] += p * v,
                    Some(_) => {}
                    None => a[i][slot[t]] -= p,
                }
            }
        }
        let sol = crate::linalg::solve_square(a, b)?;
        Some(
            (0..self.len())
                .map(|s| fixed[s].unwrap_or_else(|| sol[slot[s]]))
                .collect(),
        )
    }

    fn policy_iteration(
        &self,
        fixed: &[Option<f64>],
        mut policy: Vec<usize>,
        maximize: bool,
        rewards: bool,
        allowed: Option<&[Vec<bool>]>,
    ) -> Option<Vec<f64>> {
        if fixed.iter().filter(|f| f.is_none()).count() > EXACT_LIMIT {
            return None;
        }
        for _ in 0..EXACT_LIMIT * 4 {
            let x = self.evaluate(&policy, fixed, rewards)?;
            if x.iter().any(|v| v.is_nan()) {
                return None;
            }
            let mut changed = false;
            for s in 0..self.len() {
                if fixed[s].is_some() {
                    continue;
                }
                let q = |k: usize| {
                    let c = &self.choices[s][k];
                    if rewards {
                        c.reward + c.expect(&x)
                    } else {
                        c.expect(&x)
                    }
                };
                let current = q(policy[s]);
                let tol = 1e-12 * current.abs().max(1.0);
                for k in 0..self.choices[s].len() {
                    if allowed.is_some_and(|a| !a[s][k]) {
                        continue;
                    }
                    let v = q(k);
                    let better = if maximize {
                        v > q(policy[s]) + tol
                    } else {
                        v < q(policy[s]) - tol
                    };
                    if better {
                        policy[s] = k;
                        changed = true;
                    }
                }
            }
            if !changed {
                return Some(x);
            }
        }
        None
    }

    /// Deterministic strategy reaching `goal` almost surely from every state
    /// of `region` (which must be closed under the chosen actions).
    fn progress_policy(&self, goal: &[bool], region: &[bool]) -> Vec<usize> {
        let n = self.len();
        let mut policy = vec![0; n];
        let mut layer: Vec<bool> = (0..n).map(|s| goal[s] && region[s]).collect();
        loop {
            let snap = layer.clone();
            let mut changed = false;
            for s in 0..n {
                if snap[s] || !region[s] {
                    continue;
                }
                if let Some(k) = self.choices[s].iter().position(|c| c.inside(region) && c.hits(&snap)) {
                    policy[s] = k;
                    layer[s] = true;
                    changed = true;
                }
            }
            if !changed {
                return policy;
            }
        }
    }

    /// Optimal deterministic strategy for maximal reachability given the
    /// converged `values`: among near-optimal choices, one that makes
    /// progress towards the goal.
    pub fn max_reach_policy(&self, goal: &[bool], values: &[f64], tol: f64) -> Vec<usize> {
        let n = self.len();
        let prob1 = self.prob1_exists(goal);
        let mut policy = self.progress_policy(goal, &prob1);
        let mut layer = prob1.clone();
        let optimal: Vec<Vec<bool>> = (0..n)
            .map(|s| {
                let qs: Vec<f64> = self.choices[s].iter().map(|c| c.expect(values)).collect();
                let best = qs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                qs.iter().map(|&q| q >= best - tol).collect()
            })
            .collect();
        loop {
            let snap = layer.clone();
            let mut changed = false;
            for s in 0..n {
                if snap[s] || values[s] <= 0.0 {
                    continue;
                }
                if let Some(k) = (0..self.choices[s].len()).find(|&k| optimal[s][k] && self.choices[s][k].hits(&snap)) {
                    policy[s] = k;
                    layer[s] = true;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        for s in 0..n {
            if !layer[s] {
                policy[s] = optimal[s].iter().position(|&o| o).unwrap_or(0);
            }
        }
        policy
    }
}

/// Maximal probability of reaching `goal` when every joint action of `g`
/// is under one controller.
pub fn mdp_max_reach(
    g: &TwoPlayerGame,
    goal: &StateSet,
    settings: &EngineSettings,
) -> Result<ValueVector, EngineError> {
    settings.install(|| {
        let mdp = Mdp::joint(g, None);
        let solved = mdp.reach(goal.as_mask(), true, settings.epsilon, settings.max_iterations)?;
        Ok(ValueVector {
            values: solved.values,
            iterations: solved.iterations,
            residual: solved.residual,
            converged: true,
        })
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::parse_game;
    use crate::game::as_mdp;

    fn game(text: &str) -> TwoPlayerGame {
        as_mdp(&parse_game(text).unwrap()).unwrap()
    }

    #[test]
    fn deterministic_path() {
        let g = game(
            "game tsg\nplayers 1\nstates 3\ninit 0\nowner 1 1 1\nactions 1 0 a\nactions 1 1 a\nactions 1 2 a\n\
             t 0 a : 1 1\nt 1 a : 1 2\nt 2 a : 1 2\nlabel goal 2\n",
        );
        let v = mdp_max_reach(&g, &g.label("goal").unwrap(), &EngineSettings::default()).unwrap();
        assert_eq!(v.values, vec![1.0, 1.0, 1.0]);
        let none = mdp_max_reach(&g, &StateSet::empty(3), &EngineSettings::default()).unwrap();
        assert_eq!(none.values, vec![0.0; 3]);
    }

    #[test]
    fn retry_loop_reaches_surely() {
        let g = game(
            "game tsg\nplayers 1\nstates 3\ninit 0\nowner 1 1 1\nactions 1 0 flip\nactions 1 1 retry\nactions 1 2 a\n\
             t 0 flip : 1/2 2 1/2 1\nt 1 retry : 1 0\nt 2 a : 1 2\nlabel goal 2\n",
        );
        let v = mdp_max_reach(&g, &g.label("goal").unwrap(), &EngineSettings::default()).unwrap();
        assert!(v.values.iter().all(|&x| (x - 1.0).abs() < 1e-12));
    }

    #[test]
    fn qualitative_sets_and_rewards() {
        // 0: {to 1, stay}; 1 -> goal 2 w.p. 1/2, sink 3 w.p. 1/2.
        let g = game(
            "game tsg\nplayers 1\nstates 4\ninit 0\nowner 1 1 1 1\nactions 1 0 go stay\nactions 1 1 a\nactions 1 2 a\nactions 1 3 a\n\
             t 0 go : 1 1\nt 0 stay : 1 0\nt 1 a : 1/2 2 1/2 3\nt 2 a : 1 2\nt 3 a : 1 3\nlabel goal 2\n\
             reward r 0 go 1\nreward r 0 stay 0\nreward r 1 a 1\n",
        );
        let mdp = Mdp::joint(&g, Some("r"));
        let goal = g.label("goal").unwrap();
        let goal = goal.as_mask();
        assert_eq!(mdp.reach_exists(goal), vec![true, true, true, false]);
        assert_eq!(mdp.reach_forall(goal), vec![false, true, true, false]);
        assert_eq!(mdp.prob1_exists(goal), vec![false, false, true, false]);
        assert_eq!(mdp.prob1_forall(goal), vec![false, false, true, false]);
        let max = mdp.reach(goal, true, 1e-12, 1000).unwrap();
        assert_eq!(max.values, vec![0.5, 0.5, 1.0, 0.0]);
        let min = mdp.reach(goal, false, 1e-12, 1000).unwrap();
        assert_eq!(min.values, vec![0.0, 0.5, 1.0, 0.0]);
        let r = mdp.total_reward(goal, false, 1e-12, 1000).unwrap();
        assert!(r.values[0].is_infinite() && r.values[1].is_infinite());
        assert_eq!(r.values[2], 0.0);
    }

    #[test]
    fn zero_reward_loop_does_not_hide_cost() {
        // 0: {free self-loop, pay 2 to goal}. The loop never reaches the goal.
        let g = game(
            "game tsg\nplayers 1\nstates 2\ninit 0\nowner 1 1\nactions 1 0 loop pay\nactions 1 1 a\n\
             t 0 loop : 1 0\nt 0 pay : 1 1\nt 1 a : 1 1\nlabel goal 1\nreward r 0 pay 2\n",
        );
        let mdp = Mdp::joint(&g, Some("r"));
        let goal = g.label("goal").unwrap();
        let r = mdp.total_reward(goal.as_mask(), false, 1e-12, 1000).unwrap();
        assert!((r.values[0] - 2.0).abs() < 1e-9 && r.values[1] == 0.0);
        let r = mdp.total_reward(goal.as_mask(), true, 1e-12, 1000).unwrap();
        assert!(r.values[0].is_infinite());
    }

    #[test]
    fn exact_solver_matches_iteration() {
        // 0: {risky: goal 1/3, back 2/3; safe: 1 to 1}; 1: {1/2 goal, 1/2 sink}.
        let g = game(
            "game tsg\nplayers 1\nstates 4\ninit 0\nowner 1 1 1 1\nactions 1 0 risky safe\nactions 1 1 a\nactions 1 2 a\nactions 1 3 a\n\
             t 0 risky : 1/3 2 2/3 0\nt 0 safe : 1 1\nt 1 a : 1/2 2 1/2 3\nt 2 a : 1 2\nt 3 a : 1 3\nlabel goal 2\n\
             reward r 0 risky 1\nreward r 0 safe 1\nreward r 1 a 3\n",
        );
        let mdp = Mdp::joint(&g, Some("r"));
        let goal = g.label("goal").unwrap();
        let goal = goal.as_mask();
        for maximize in [true, false] {
            let exact = mdp.reach_exact(goal, maximize).unwrap();
            let vi = mdp.reach(goal, maximize, 1e-13, 100_000).unwrap().values;
            assert!(
                exact.iter().zip(&vi).all(|(a, b)| (a - b).abs() < 1e-9),
                "{exact:?} {vi:?}"
            );
        }
        assert_eq!(mdp.reach_exact(goal, true).unwrap()[0], 1.0);
        assert!((mdp.reach_exact(goal, false).unwrap()[0] - 0.5).abs() < 1e-12);
        let r = mdp.total_reward_exact(goal, false).unwrap();
        assert!((r[0] - 3.0).abs() < 1e-12, "{r:?}");
        assert!(mdp.total_reward_exact(goal, true).unwrap()[0].is_infinite());
    }
}
