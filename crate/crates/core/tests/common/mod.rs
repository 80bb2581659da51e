//! Random model generators and brute-force oracles shared by the
//! integration tests. The oracles only read the model through its public
//! data and never call the engines.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgcheck::engines::Memory;
use sgcheck::game::{CoalitionSpec, Distribution, GameKind, GameModel, Player, StateSet, TwoPlayerGame};
use sgcheck::matrix::Criterion;
use sgcheck::query::{EquilibriumKind, Optimum, PathFormula, ProbBound, Query};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Distribution over up to three distinct states with rational weights.
pub fn random_distribution(rng: &mut ChaCha8Rng, states: usize) -> Distribution {
    let k = rng.gen_range(1..=states.min(3));
    let mut targets: Vec<usize> = (0..states).collect();
    for i in 0..k {
        let j = rng.gen_range(i..states);
        targets.swap(i, j);
    }
    let weights: Vec<u32> = (0..k).map(|_| rng.gen_range(1..=4)).collect();
    let total: u32 = weights.iter().sum();
    let mut entries: Vec<(usize, f64)> = targets[..k]
        .iter()
        .zip(&weights)
        .map(|(&t, &w)| (t, w as f64 / total as f64))
        .collect();
    // Put any rounding error on the first entry so the sum is 1.
    let rest: f64 = entries[1..].iter().map(|e| e.1).sum();
    entries[0].1 = 1.0 - rest;
    Distribution::new(entries)
}

fn labels(rng: &mut ChaCha8Rng, states: usize, names: &[&str]) -> BTreeMap<String, BTreeSet<usize>> {
    names
        .iter()
        .map(|name| {
            let set: BTreeSet<usize> = (0..states).filter(|_| rng.gen_bool(0.3)).collect();
            (name.to_string(), set)
        })
        .collect()
}

fn action_names(prefix: &str, k: usize) -> Vec<String> {
    (0..k).map(|i| format!("{prefix}{i}")).collect()
}

/// Turn-based game; labels `goal` and `goal2` are random subsets.
pub fn random_tsg(rng: &mut ChaCha8Rng, states: usize, players: usize, max_actions: usize) -> GameModel {
    let owner: Vec<usize> = (0..states).map(|_| rng.gen_range(1..=players)).collect();
    let mut actions = vec![Vec::with_capacity(states); players];
    let mut transitions = BTreeMap::new();
    for s in 0..states {
        for (p, per_state) in actions.iter_mut().enumerate() {
            if owner[s] == p + 1 {
                per_state.push(action_names(&format!("p{}a", p + 1), rng.gen_range(1..=max_actions)));
            } else {
                per_state.push(vec!["_".to_string()]);
            }
        }
        for a in 0..actions[owner[s] - 1][s].len() {
            let mut joint = vec![0; players];
            joint[owner[s] - 1] = a;
            transitions.insert((s, joint), random_distribution(rng, states));
        }
    }
    GameModel {
        kind: GameKind::Tsg,
        players,
        states,
        initial: 0,
        owner: Some(owner),
        actions,
        transitions,
        labels: labels(rng, states, &["goal", "goal2"]),
        rewards: BTreeMap::new(),
    }
}

/// Concurrent game with `1..=max_actions` actions per player and state.
pub fn random_csg(rng: &mut ChaCha8Rng, states: usize, players: usize, max_actions: usize) -> GameModel {
    let mut actions = vec![Vec::with_capacity(states); players];
    let mut transitions = BTreeMap::new();
    for s in 0..states {
        let sizes: Vec<usize> = (0..players).map(|_| rng.gen_range(1..=max_actions)).collect();
        for p in 0..players {
            actions[p].push(action_names(&format!("p{}a", p + 1), sizes[p]));
        }
        for joint in product(&sizes) {
            transitions.insert((s, joint), random_distribution(rng, states));
        }
    }
    GameModel {
        kind: GameKind::Csg,
        players,
        states,
        initial: 0,
        owner: None,
        actions,
        transitions,
        labels: labels(rng, states, &["goal", "goal2"]),
        rewards: BTreeMap::new(),
    }
}

/// Concurrent game with `transient` random states followed by absorbing
/// states won by coalition 1 only, by coalition 2 only, and by nobody.
/// Labels `goal` and `goal2` hold the winning state plus a few random
/// transient ones, so the goals genuinely conflict.
pub fn random_conflict_csg(rng: &mut ChaCha8Rng, transient: usize, max_actions: usize) -> GameModel {
    let n = transient + 3;
    let mut model = random_csg(rng, n, 2, max_actions);
    for s in transient..n {
        model.actions[0][s] = action_names("p1a", 1);
        model.actions[1][s] = action_names("p2a", 1);
        model.transitions.retain(|(t, _), _| *t != s);
        model.transitions.insert((s, vec![0, 0]), Distribution::dirac(s));
    }
    let extra = |rng: &mut ChaCha8Rng| -> BTreeSet<usize> { (0..transient).filter(|_| rng.gen_bool(0.15)).collect() };
    let mut g1 = extra(rng);
    g1.insert(transient);
    let mut g2 = extra(rng);
    g2.insert(transient + 1);
    model.labels.insert("goal".into(), g1);
    model.labels.insert("goal2".into(), g2);
    model
}

/// Adds a reward structure `r` with random values on every joint action.
pub fn add_rewards(rng: &mut ChaCha8Rng, model: &mut GameModel) {
    let table = model
        .transitions
        .keys()
        .map(|k| (k.clone(), rng.gen_range(0..=4) as f64 / 2.0))
        .collect();
    model.rewards.insert("r".into(), table);
}

pub fn product(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &k in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (0..k).map(move |a| {
                    let mut v = prefix.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    out
}

/// Solves `a x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&i, &j| a[i][c].abs().partial_cmp(&a[j][c].abs()).unwrap())
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        let piv = a[c][c];
        assert!(piv.abs() > 1e-14, "singular oracle system");
        for r in 0..n {
            if r != c {
                let f = a[r][c] / piv;
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Reachability probabilities of `goal` in a Markov chain given by
/// successor lists, by graph analysis and one linear solve.
pub fn chain_reach(succ: &[Vec<(usize, f64)>], goal: &[bool]) -> Vec<f64> {
    let n = succ.len();
    let mut can = goal.to_vec();
    loop {
        let mut changed = false;
        for s in 0..n {
            if !can[s] && succ[s].iter().any(|&(t, p)| p > 0.0 && can[t]) {
                can[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let unknown: Vec<usize> = (0..n).filter(|&s| can[s] && !goal[s]).collect();
    let pos: BTreeMap<usize, usize> = unknown.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let k = unknown.len();
    let mut a = vec![vec![0.0; k]; k];
    let mut b = vec![0.0; k];
    for (i, &s) in unknown.iter().enumerate() {
        a[i][i] += 1.0;
        for &(t, p) in &succ[s] {
            if goal[t] {
                b[i] += p;
            } else if let Some(&j) = pos.get(&t) {
                a[i][j] -= p;
            }
        }
    }
    let x = if k > 0 { gauss(a, b) } else { Vec::new() };
    (0..n)
        .map(|s| {
            if goal[s] {
                1.0
            } else if let Some(&i) = pos.get(&s) {
                x[i]
            } else {
                0.0
            }
        })
        .collect()
}

/// Reachability value of a two-player turn-based model where player
/// `maxer` maximizes, by enumerating every pair of deterministic memoryless
/// strategies.
pub fn tsg_oracle(model: &GameModel, goal: &BTreeSet<usize>, maxer: usize) -> Vec<f64> {
    let n = model.states;
    let owner = model.owner.as_ref().expect("turn-based");
    let goal_mask: Vec<bool> = (0..n).map(|s| goal.contains(&s)).collect();
    let sizes = |player: usize| -> Vec<usize> {
        (0..n)
            .map(|s| {
                if owner[s] == player {
                    model.actions[player - 1][s].len()
                } else {
                    1
                }
            })
            .collect()
    };
    let minner = 3 - maxer;
    let (s1, s2) = (product(&sizes(maxer)), product(&sizes(minner)));
    let mut best = vec![f64::NEG_INFINITY; n];
    for sigma1 in &s1 {
        let mut worst = vec![f64::INFINITY; n];
        for sigma2 in &s2 {
            let succ: Vec<Vec<(usize, f64)>> = (0..n)
                .map(|s| {
                    let mut joint = vec![0; model.players];
                    let o = owner[s];
                    joint[o - 1] = if o == maxer { sigma1[s] } else { sigma2[s] };
                    model.transitions[&(s, joint)].entries().to_vec()
                })
                .collect();
            let x = chain_reach(&succ, &goal_mask);
            for s in 0..n {
                worst[s] = worst[s].min(x[s]);
            }
        }
        for s in 0..n {
            best[s] = best[s].max(worst[s]);
        }
    }
    best
}

/// Exact optimal reachability in an MDP given as `choices[s][c]` lists of
/// successors, by policy iteration with a linear solve per policy. For
/// minimization, states that can avoid the goal forever are fixed to 0
/// first, which makes the remaining fixpoint unique.
pub fn mdp_oracle(choices: &[Vec<Vec<(usize, f64)>>], goal: &[bool], maximize: bool) -> Vec<f64> {
    let n = choices.len();
    let mut avoid = vec![false; n];
    if !maximize {
        avoid = goal.iter().map(|g| !g).collect();
        loop {
            let mut changed = false;
            for s in 0..n {
                if avoid[s] && !choices[s].iter().any(|d| d.iter().all(|&(t, p)| p == 0.0 || avoid[t])) {
                    avoid[s] = false;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }
    let mut policy: Vec<usize> = (0..n)
        .map(|s| {
            if avoid[s] {
                (0..choices[s].len())
                    .find(|&c| choices[s][c].iter().all(|&(t, p)| p == 0.0 || avoid[t]))
                    .unwrap()
            } else {
                0
            }
        })
        .collect();
    loop {
        let succ: Vec<Vec<(usize, f64)>> = (0..n).map(|s| choices[s][policy[s]].clone()).collect();
        let x = chain_reach(&succ, goal);
        let mut changed = false;
        for s in 0..n {
            if goal[s] || avoid[s] {
                continue;
            }
            let q = |c: usize| choices[s][c].iter().map(|&(t, p)| p * x[t]).sum::<f64>();
            let current = q(policy[s]);
            for c in 0..choices[s].len() {
                let better = if maximize {
                    q(c) > current + 1e-12
                } else {
                    q(c) < current - 1e-12
                };
                if better {
                    policy[s] = c;
                    changed = true;
                    break;
                }
            }
        }
        if !changed {
            return x;
        }
    }
}

/// Optimal reachability of `goal` for the side not fixed by `fixed`
/// (`fixed[s]` is a distribution over `fixed_side`'s actions), solved
/// exactly on the induced MDP.
pub fn best_response_oracle(
    g: &TwoPlayerGame,
    fixed_side: Player,
    fixed: &[Vec<f64>],
    goal: &StateSet,
    maximize: bool,
) -> Vec<f64> {
    let n = g.num_states();
    let free = fixed_side.other();
    let choices: Vec<Vec<Vec<(usize, f64)>>> = (0..n)
        .map(|s| {
            (0..g.num_actions(free, s))
                .map(|c| {
                    let mut acc = vec![0.0; n];
                    for (f, w) in fixed[s].iter().enumerate() {
                        let d = match free {
                            Player::One => g.transition(s, c, f),
                            Player::Two => g.transition(s, f, c),
                        };
                        for (t, p) in d.iter() {
                            acc[t] += w * p;
                        }
                    }
                    acc.into_iter().enumerate().filter(|&(_, p)| p > 0.0).collect()
                })
                .collect()
        })
        .collect();
    mdp_oracle(&choices, goal.as_mask(), maximize)
}

/// Random matrix with entries in `[-5, 5]`, rounded to quarters with
/// probability one half so that ties and degeneracies occur.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let coarse = rng.gen_bool(0.5);
    (0..rows)
        .map(|_| {
            (0..cols)
                .map(|_| {
                    let v: f64 = rng.gen_range(-5.0..5.0);
                    if coarse {
                        (v * 4.0).round() / 4.0
                    } else {
                        v
                    }
                })
                .collect()
        })
        .collect()
}

/// Largest gain from a pure unilateral deviation in a bimatrix game.
pub fn regret(z1: &[Vec<f64>], z2: &[Vec<f64>], p: &[f64], q: &[f64]) -> (f64, f64) {
    let (m, n) = (z1.len(), z1[0].len());
    let pay = |z: &[Vec<f64>], p: &[f64], q: &[f64]| -> f64 {
        (0..m).map(|i| (0..n).map(|j| p[i] * q[j] * z[i][j]).sum::<f64>()).sum()
    };
    let u1 = pay(z1, p, q);
    let u2 = pay(z2, p, q);
    let best1 = (0..m)
        .map(|i| (0..n).map(|j| q[j] * z1[i][j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let best2 = (0..n)
        .map(|j| (0..m).map(|i| p[i] * z2[i][j]).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    (best1 - u1, best2 - u2)
}

const LABELS: [&str; 6] = ["goal", "b_2", "x", "safe zone", "g-1", "final.state"];
const REWARDS: [&str; 3] = ["r", "time", "energy cost"];

fn random_coalition(rng: &mut ChaCha8Rng, players: usize, exclude: &CoalitionSpec) -> CoalitionSpec {
    let free: Vec<usize> = (1..=players).filter(|&p| !exclude.contains(p)).collect();
    loop {
        let c = CoalitionSpec::new(free.iter().copied().filter(|_| rng.gen_bool(0.5)));
        if !c.is_empty() {
            return c;
        }
    }
}

/// Random query over `players` players (at least two). Equilibrium
/// queries split the players into two coalitions.
pub fn random_query(rng: &mut ChaCha8Rng, players: usize) -> Query {
    let none = CoalitionSpec::new([]);
    let label = |rng: &mut ChaCha8Rng| LABELS[rng.gen_range(0..LABELS.len())].to_string();
    match rng.gen_range(0..3) {
        0 => {
            let bound = match rng.gen_range(0..4) {
                0 => ProbBound::Max,
                1 => ProbBound::Min,
                2 => ProbBound::AtLeast(rng.gen_range(0.0..=1.0)),
                _ => ProbBound::AtMost((rng.gen_range(0..=100) as f64) / 100.0),
            };
            let path = if rng.gen_bool(0.5) {
                PathFormula::Eventually(label(rng))
            } else {
                PathFormula::BoundedEventually(label(rng), rng.gen_range(0..1000))
            };
            Query::Probability {
                coalition: random_coalition(rng, players, &none),
                bound,
                path,
            }
        }
        1 => Query::Reward {
            coalition: random_coalition(rng, players, &none),
            optimum: if rng.gen_bool(0.5) { Optimum::Max } else { Optimum::Min },
            reward: REWARDS[rng.gen_range(0..REWARDS.len())].to_string(),
            target: label(rng),
        },
        _ => {
            let first = loop {
                let c = random_coalition(rng, players, &none);
                if c.len() < players {
                    break c;
                }
            };
            let second = first.complement(players);
            let (kind, criterion) = match rng.gen_range(0..4) {
                0 => (None, None),
                1 => (Some(EquilibriumKind::Nash), None),
                2 => (Some(EquilibriumKind::Correlated), Some(Criterion::SocialFairness)),
                _ => (Some(EquilibriumKind::Nash), Some(Criterion::SocialWelfare)),
            };
            Query::Equilibrium {
                coalitions: [first, second],
                targets: [label(rng), label(rng)],
                kind,
                criterion,
            }
        }
    }
}

/// Reachability of `goal` per `(mode, state)` for the free side against
/// `fixed`, a strategy of `fixed_side` with goal-tracking memory.
pub fn memory_best_response(
    g: &TwoPlayerGame,
    memory: &Memory,
    fixed_side: Player,
    fixed: &[Vec<Vec<f64>>],
    goal: &StateSet,
) -> f64 {
    let n = g.num_states();
    let modes = memory.modes();
    let free = fixed_side.other();
    let mut x = vec![vec![0.0; n]; modes];
    for _ in 0..2_000_000 {
        let mut diff: f64 = 0.0;
        let mut next = x.clone();
        for m in 0..modes {
            for s in 0..n {
                let v = if goal.contains(s) {
                    1.0
                } else {
                    (0..g.num_actions(free, s))
                        .map(|c| {
                            fixed[m][s]
                                .iter()
                                .enumerate()
                                .map(|(f, w)| {
                                    let d = match free {
                                        Player::One => g.transition(s, c, f),
                                        Player::Two => g.transition(s, f, c),
                                    };
                                    w * d.iter().map(|(t, p)| p * x[memory.next(m, t)][t]).sum::<f64>()
                                })
                                .sum::<f64>()
                        })
                        .fold(f64::NEG_INFINITY, f64::max)
                };
                diff = diff.max((v - x[m][s]).abs());
                next[m][s] = v;
            }
        }
        x = next;
        if diff < 1e-13 {
            break;
        }
    }
    x[memory.initial(g.initial)][g.initial]
}

/// Probability of reaching each goal when both sides follow the given
/// memoryful strategies from the initial state.
pub fn profile_payoffs(
    g: &TwoPlayerGame,
    memory: &Memory,
    sigma: [&[Vec<Vec<f64>>]; 2],
    goals: [&StateSet; 2],
) -> [f64; 2] {
    let n = g.num_states();
    let modes = memory.modes();
    let mut out = [0.0; 2];
    for (i, goal) in goals.iter().enumerate() {
        let mut x = vec![vec![0.0; n]; modes];
        for _ in 0..2_000_000 {
            let mut diff: f64 = 0.0;
            let mut next = x.clone();
            for m in 0..modes {
                for s in 0..n {
                    let v = if goal.contains(s) {
                        1.0
                    } else {
                        let mut acc = 0.0;
                        for (a, pa) in sigma[0][m][s].iter().enumerate() {
                            for (b, pb) in sigma[1][m][s].iter().enumerate() {
                                if pa * pb > 0.0 {
                                    acc += pa
                                        * pb
                                        * g.transition(s, a, b)
                                            .iter()
                                            .map(|(t, p)| p * x[memory.next(m, t)][t])
                                            .sum::<f64>();
                                }
                            }
                        }
                        acc
                    };
                    diff = diff.max((v - x[m][s]).abs());
                    next[m][s] = v;
                }
            }
            x = next;
            if diff < 1e-13 {
                break;
            }
        }
        out[i] = x[memory.initial(g.initial)][g.initial];
    }
    out
}

/// A concurrent model where player 2 has a single action everywhere and
/// the same model written as a turn-based game owned by player 1.
pub fn dummy_pair(seed: u64) -> (GameModel, GameModel) {
    let mut r = rng(seed);
    let n = r.gen_range(1..=6);
    let mut tsg = random_tsg(&mut r, n, 1, 3);
    add_rewards(&mut r, &mut tsg);
    tsg.players = 2;
    tsg.owner = Some(vec![1; n]);
    tsg.actions.push(vec![vec!["_".to_string()]; n]);
    let widen = |m: &std::collections::BTreeMap<(usize, Vec<usize>), f64>| {
        m.iter().map(|((s, j), v)| ((*s, vec![j[0], 0]), *v)).collect()
    };
    tsg.transitions = tsg
        .transitions
        .into_iter()
        .map(|((s, j), d)| ((s, vec![j[0], 0]), d))
        .collect();
    tsg.rewards = tsg.rewards.iter().map(|(k, m)| (k.clone(), widen(m))).collect();
    let mut csg = tsg.clone();
    csg.kind = GameKind::Csg;
    csg.owner = None;
    (tsg, csg)
}
