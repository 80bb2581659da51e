//! Certificates: best responses against fixed strategies and
//! ε-equilibrium checks.

use super::mdp::{Choice, Mdp};
use super::qualitative::Oriented;
use super::reach::ZeroSumResult;
use super::strategy::{Memory, Profile, Strategy};
use super::{EngineError, ValueVector};
use crate::game::{Player, StateId, StateSet, TwoPlayerGame};

const BR_EPSILON: f64 = 1e-12;
const BR_MAX_ITERATIONS: usize = 10_000_000;

/// What the free side optimizes against a fixed strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    Reach {
        goal: StateSet,
        maximize: bool,
    },
    Reward {
        name: String,
        goal: StateSet,
        maximize: bool,
    },
}

impl Objective {
    fn goal(&self) -> &StateSet {
        match self {
            Objective::Reach { goal, .. } | Objective::Reward { goal, .. } => goal,
        }
    }

    fn maximize(&self) -> bool {
        match self {
            Objective::Reach { maximize, .. } | Objective::Reward { maximize, .. } => *maximize,
        }
    }

    fn reward(&self) -> Option<&str> {
        match self {
            Objective::Reach { .. } => None,
            Objective::Reward { name, .. } => Some(name),
        }
    }

    fn with_direction(&self, maximize: bool) -> Objective {
        match self {
            Objective::Reach { goal, .. } => Objective::Reach {
                goal: goal.clone(),
                maximize,
            },
            Objective::Reward { name, goal, .. } => Objective::Reward {
                name: name.clone(),
                goal: goal.clone(),
                maximize,
            },
        }
    }
}

/// Product of memory modes and states, indexed `mode * n + state`.
struct Product<'a> {
    g: &'a TwoPlayerGame,
    memory: &'a Memory,
}

impl Product<'_> {
    fn n(&self) -> usize {
        self.g.num_states()
    }

    fn size(&self) -> usize {
        self.memory.modes() * self.n()
    }

    fn index(&self, mode: usize, s: StateId) -> usize {
        mode * self.n() + s
    }

    fn goal_mask(&self, goal: &StateSet) -> Vec<bool> {
        (0..self.size()).map(|k| goal.contains(k % self.n())).collect()
    }

    /// Successors of `(mode, s)` under a weighted mix of transitions.
    fn successors(
        &self,
        mode: usize,
        s: StateId,
        weighted: impl Iterator<Item = (f64, (usize, usize))>,
    ) -> Vec<(usize, f64)> {
        let mut acc: Vec<(usize, f64)> = Vec::new();
        for (w, (a, b)) in weighted {
            if w <= 0.0 {
                continue;
            }
            for (t, p) in self.g.transition(s, a, b).iter() {
                let k = self.index(self.memory.next(mode, t), t);
                match acc.iter_mut().find(|(j, _)| *j == k) {
                    Some(e) => e.1 += w * p,
                    None => acc.push((k, w * p)),
                }
            }
        }
        acc.sort_by_key(|e| e.0);
        acc
    }

    fn start(&self, s: StateId) -> usize {
        self.index(self.memory.initial(s), s)
    }
}

fn solve(mdp: &Mdp, goal: &[bool], objective: &Objective) -> Result<Vec<f64>, EngineError> {
    let exact = match objective.reward() {
        None => mdp.reach_exact(goal, objective.maximize()),
        Some(_) => mdp.total_reward_exact(goal, objective.maximize()),
    };
    if let Some(values) = exact {
        return Ok(values);
    }
    let solved = match objective.reward() {
        None => mdp.reach(goal, objective.maximize(), BR_EPSILON, BR_MAX_ITERATIONS)?,
        Some(_) => mdp.total_reward(goal, objective.maximize(), BR_EPSILON, BR_MAX_ITERATIONS)?,
    };
    Ok(solved.values)
}

fn max_reach(mdp: &Mdp, goal: &[bool]) -> Result<Vec<f64>, EngineError> {
    match mdp.reach_exact(goal, true) {
        Some(v) => Ok(v),
        None => Ok(mdp.reach(goal, true, BR_EPSILON, BR_MAX_ITERATIONS)?.values),
    }
}

/// Optimal value of the side not fixed by `fixed`, from every state (in
/// the memory mode a fresh play starting there would have).
pub fn best_response_value(
    g: &TwoPlayerGame,
    fixed: &Strategy,
    objective: &Objective,
) -> Result<ValueVector, EngineError> {
    fixed.validate(g)?;
    if let Some(r) = objective.reward() {
        if !g.has_reward(r) {
            return Err(EngineError::UnknownReward(r.to_string()));
        }
    }
    let product = Product {
        g,
        memory: &fixed.memory,
    };
    let free = fixed.player.other();
    let v = Oriented::new(g, free);
    let mut choices = Vec::with_capacity(product.size());
    for mode in 0..fixed.memory.modes() {
        for s in 0..g.num_states() {
            let sigma = fixed.choice(mode, s);
            let per_choice = (0..v.rows(s))
                .map(|c| {
                    let pair = |x: usize| match free {
                        Player::One => (c, x),
                        Player::Two => (x, c),
                    };
                    let reward = objective.reward().map_or(0.0, |r| {
                        sigma.iter().enumerate().map(|(x, w)| w * v.reward(r, s, c, x)).sum()
                    });
                    Choice {
                        succ: product.successors(mode, s, sigma.iter().enumerate().map(|(x, &w)| (w, pair(x)))),
                        reward,
                    }
                })
                .collect();
            choices.push(per_choice);
        }
    }
    let mdp = Mdp { choices };
    let values = solve(&mdp, &product.goal_mask(objective.goal()), objective)?;
    Ok(ValueVector {
        values: (0..g.num_states()).map(|s| values[product.start(s)]).collect(),
        iterations: 0,
        residual: 0.0,
        converged: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZeroSumCertificate {
    /// `|best response − reported|` at the initial state, against player
    /// 1's strategy and against player 2's.
    pub gaps: [f64; 2],
    /// Largest such gap over all states.
    pub worst: [f64; 2],
    pub pass: bool,
}

fn gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs()
    }
}

/// Checks both strategies of a zero-sum run against optimal opposition.
/// `objective` carries player 1's direction; `tolerance` bounds the gaps.
pub fn certify_zero_sum(
    g: &TwoPlayerGame,
    result: &ZeroSumResult,
    objective: &Objective,
    tolerance: f64,
) -> Result<ZeroSumCertificate, EngineError> {
    let reported = &result.values.values;
    let p1 = objective.maximize();
    let against = [
        best_response_value(g, &result.strategies[0], &objective.with_direction(!p1))?,
        best_response_value(g, &result.strategies[1], &objective.with_direction(p1))?,
    ];
    let mut gaps = [0.0; 2];
    let mut worst = [0.0f64; 2];
    for i in 0..2 {
        gaps[i] = gap(against[i].values[g.initial], reported[g.initial]);
        worst[i] = (0..g.num_states()).fold(0.0, |m, s| m.max(gap(against[i].values[s], reported[s])));
    }
    Ok(ZeroSumCertificate {
        gaps,
        worst,
        pass: gaps.iter().all(|&x| x <= tolerance),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCertificate {
    /// Best-response value minus achieved payoff, per coalition.
    pub gaps: [f64; 2],
    pub achieved: [f64; 2],
    pub best_response: [f64; 2],
    pub pass: bool,
}

/// Payoffs of the profile itself: reachability of each goal in the
/// induced chain.
fn achieved(g: &TwoPlayerGame, profile: &Profile, goals: [&StateSet; 2]) -> Result<[f64; 2], EngineError> {
    let memory = profile.memory();
    let product = Product { g, memory };
    let mut choices = Vec::with_capacity(product.size());
    for mode in 0..memory.modes() {
        for s in 0..g.num_states() {
            let j = profile.joint(mode, s);
            let weighted = (0..j.rows)
                .flat_map(|a| (0..j.cols).map(move |b| (a, b)))
                .map(|(a, b)| (j.get(a, b), (a, b)));
            choices.push(vec![Choice {
                succ: product.successors(mode, s, weighted),
                reward: 0.0,
            }]);
        }
    }
    let mdp = Mdp { choices };
    let start = product.start(g.initial);
    let mut out = [0.0; 2];
    for i in 0..2 {
        out[i] = max_reach(&mdp, &product.goal_mask(goals[i]))?[start];
    }
    Ok(out)
}

/// Best deviation value of `deviator` against a correlated profile: the
/// deviator sees its recommended action, then picks any action.
fn correlated_deviation(
    g: &TwoPlayerGame,
    profile: &Profile,
    deviator: Player,
    goal: &StateSet,
) -> Result<f64, EngineError> {
    let memory = profile.memory();
    let product = Product { g, memory };
    let chance = product.size();
    let v = Oriented::new(g, deviator);
    // Signal nodes follow the chance nodes: one per (mode, state, action).
    let mut offsets = Vec::with_capacity(chance);
    let mut next = chance;
    for k in 0..chance {
        offsets.push(next);
        next += v.rows(k % g.num_states());
    }
    let mut choices: Vec<Vec<Choice>> = vec![Vec::new(); next];
    for mode in 0..memory.modes() {
        for s in 0..g.num_states() {
            let k = product.index(mode, s);
            let j = profile.joint(mode, s);
            let cell = |own: usize, other: usize| match deviator {
                Player::One => j.get(own, other),
                Player::Two => j.get(other, own),
            };
            let (rows, cols) = (v.rows(s), v.cols(s));
            let marginal: Vec<f64> = (0..rows).map(|a| (0..cols).map(|b| cell(a, b)).sum()).collect();
            let mut succ: Vec<(usize, f64)> = (0..rows)
                .filter(|&a| marginal[a] > 0.0)
                .map(|a| (offsets[k] + a, marginal[a]))
                .collect();
            let total: f64 = succ.iter().map(|e| e.1).sum();
            succ.iter_mut().for_each(|e| e.1 /= total);
            choices[k] = vec![Choice { succ, reward: 0.0 }];
            for rec in 0..rows {
                let node = offsets[k] + rec;
                if marginal[rec] <= 0.0 {
                    // Unreachable signal; give it a harmless self-loop.
                    choices[node] = vec![Choice {
                        succ: vec![(node, 1.0)],
                        reward: 0.0,
                    }];
                    continue;
                }
                choices[node] = (0..rows)
                    .map(|dev| {
                        let weighted = (0..cols).map(|b| {
                            let pair = match deviator {
                                Player::One => (dev, b),
                                Player::Two => (b, dev),
                            };
                            (cell(rec, b) / marginal[rec], pair)
                        });
                        Choice {
                            succ: product.successors(mode, s, weighted),
                            reward: 0.0,
                        }
                    })
                    .collect();
            }
        }
    }
    let mdp = Mdp { choices };
    let mut goal_mask = product.goal_mask(goal);
    goal_mask.resize(next, false);
    let values = max_reach(&mdp, &goal_mask)?;
    Ok(values[product.start(g.initial)])
}

/// Checks that no coalition gains more than `eps` by deviating
/// unilaterally from `profile`, measured at the initial state.
pub fn check_epsilon_equilibrium(
    g: &TwoPlayerGame,
    profile: &Profile,
    goals: [&StateSet; 2],
    eps: f64,
) -> Result<EquilibriumCertificate, EngineError> {
    profile.validate(g)?;
    let achieved = achieved(g, profile, goals)?;
    let best_response = match profile {
        Profile::Independent(s) => {
            let br1 = best_response_value(
                g,
                &s[1],
                &Objective::Reach {
                    goal: goals[0].clone(),
                    maximize: true,
                },
            )?;
            let br2 = best_response_value(
                g,
                &s[0],
                &Objective::Reach {
                    goal: goals[1].clone(),
                    maximize: true,
                },
            )?;
            [br1.values[g.initial], br2.values[g.initial]]
        }
        Profile::Correlated(_) => [
            correlated_deviation(g, profile, Player::One, goals[0])?,
            correlated_deviation(g, profile, Player::Two, goals[1])?,
        ],
    };
    let gaps = [best_response[0] - achieved[0], best_response[1] - achieved[1]];
    Ok(EquilibriumCertificate {
        gaps,
        achieved,
        best_response,
        pass: gaps.iter().all(|&x| x <= eps),
    })
}
