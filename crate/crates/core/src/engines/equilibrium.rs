//! Value iteration for two-coalition equilibria with reachability goals.

use super::mdp::Mdp;
use super::settings::{per_state, EngineSettings};
use super::strategy::{JointStrategy, Memory, Profile, Strategy};
use super::EngineError;
use crate::game::{Player, StateId, StateSet, TwoPlayerGame};
use crate::matrix::{
    select_equilibrium, solve_bimatrix_all_ne, solve_correlated_eq, BimatrixGame, JointDistribution, Matrix,
};
use crate::query::EquilibriumKind;

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumResult {
    /// Payoff pair (probability of reaching each coalition's goal) per state.
    pub values: Vec<(f64, f64)>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    /// Maximal reachability of each goal over the joint-action MDP.
    pub pmax: [Vec<f64>; 2],
    pub profile: Profile,
}

/// One-shot solution at a state: row and column mixes, or a joint one.
#[derive(Debug, Clone, PartialEq)]
enum Local {
    Mixed(Vec<f64>, Vec<f64>),
    Joint(JointDistribution),
}

fn dirac(n: usize, k: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    d[k] = 1.0;
    d
}

/// Solves the equilibrium recurrence: goal states take their fixed
/// boundary pairs, every other state the selected one-shot equilibrium of
/// the pair of expected-value matrices.
pub fn equilibrium_vi(
    g: &TwoPlayerGame,
    goal1: &StateSet,
    goal2: &StateSet,
    settings: &EngineSettings,
) -> Result<EquilibriumResult, EngineError> {
    settings.install(|| run(g, goal1, goal2, settings))?
}

fn run(
    g: &TwoPlayerGame,
    goal1: &StateSet,
    goal2: &StateSet,
    settings: &EngineSettings,
) -> Result<EquilibriumResult, EngineError> {
    let n = g.num_states();
    let mdp = Mdp::joint(g, None);
    let pmax1 = mdp
        .reach(goal1.as_mask(), true, settings.epsilon, settings.max_iterations)?
        .values;
    let pmax2 = mdp
        .reach(goal2.as_mask(), true, settings.epsilon, settings.max_iterations)?
        .values;
    let tol = (settings.epsilon * 1e-3).max(1e-12);
    let policies = [
        mdp.max_reach_policy(goal1.as_mask(), &pmax1, tol),
        mdp.max_reach_policy(goal2.as_mask(), &pmax2, tol),
    ];

    let boundary = |s: StateId| -> Option<(f64, f64)> {
        match (goal1.contains(s), goal2.contains(s)) {
            (true, true) => Some((1.0, 1.0)),
            (true, false) => Some((1.0, pmax2[s])),
            (false, true) => Some((pmax1[s], 1.0)),
            (false, false) => None,
        }
    };
    let mut x: Vec<(f64, f64)> = (0..n).map(|s| boundary(s).unwrap_or((0.0, 0.0))).collect();
    let mut local: Vec<Option<Local>> = vec![None; n];
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < settings.max_iterations {
        let solved = per_state(n, |s| -> Result<Option<((f64, f64), Local)>, EngineError> {
            if boundary(s).is_some() {
                return Ok(None);
            }
            let (m2, n2) = (g.num_actions(Player::One, s), g.num_actions(Player::Two, s));
            let z1 = Matrix::from_fn(m2, n2, |a, b| {
                g.transition(s, a, b).iter().map(|(t, p)| p * x[t].0).sum()
            });
            let z2 = Matrix::from_fn(m2, n2, |a, b| {
                g.transition(s, a, b).iter().map(|(t, p)| p * x[t].1).sum()
            });
            let game = BimatrixGame::new(z1, z2)?;
            Ok(Some(match settings.kind {
                EquilibriumKind::Nash => {
                    let all = solve_bimatrix_all_ne(&game)?;
                    let e = select_equilibrium(&all, settings.criterion)?;
                    (e.payoffs, Local::Mixed(e.p, e.q))
                }
                EquilibriumKind::Correlated => {
                    let c = solve_correlated_eq(&game, settings.criterion)?;
                    (c.payoffs, Local::Joint(c.joint))
                }
            }))
        });
        let mut next = x.clone();
        for (s, r) in solved.into_iter().enumerate() {
            if let Some((pair, profile)) = r? {
                let pair = (pair.0.clamp(0.0, 1.0), pair.1.clamp(0.0, 1.0));
                // Keep the profile of the last sweep that changed the pair.
                if local[s].is_none() || pair != x[s] {
                    local[s] = Some(profile);
                }
                next[s] = pair;
            }
        }
        residual = next
            .iter()
            .zip(&x)
            .fold(0.0f64, |m, (a, b)| m.max((a.0 - b.0).abs()).max((a.1 - b.1).abs()));
        x = next;
        iterations += 1;
        if residual <= settings.epsilon {
            break;
        }
    }
    if residual > settings.epsilon {
        return Err(EngineError::NotConverged { iterations, residual });
    }

    let memory = Memory::goals(goal1.clone(), goal2.clone());
    // After one goal is reached both sides follow the joint action that
    // maximizes the probability of the other goal.
    let joint_for = |mode: usize, s: StateId| -> (usize, usize) {
        let n2 = g.num_actions(Player::Two, s);
        let k = match mode {
            1 => policies[1][s],
            2 => policies[0][s],
            _ => 0,
        };
        (k / n2, k % n2)
    };
    let profile = match settings.kind {
        EquilibriumKind::Nash => {
            let mut tables: [Vec<Vec<Vec<f64>>>; 2] = [vec![Vec::new(); 4], vec![Vec::new(); 4]];
            for mode in 0..4 {
                for s in 0..n {
                    let (m2, n2) = (g.num_actions(Player::One, s), g.num_actions(Player::Two, s));
                    let effective = mode | memory.bits(s);
                    let (p, q) = match (&local[s], effective) {
                        (Some(Local::Mixed(p, q)), 0) => (p.clone(), q.clone()),
                        _ => {
                            let (a, b) = joint_for(effective, s);
                            (dirac(m2, a), dirac(n2, b))
                        }
                    };
                    tables[0][mode].push(p);
                    tables[1][mode].push(q);
                }
            }
            let [t1, t2] = tables;
            Profile::Independent(Box::new([
                Strategy {
                    player: Player::One,
                    memory: memory.clone(),
                    choices: t1,
                },
                Strategy {
                    player: Player::Two,
                    memory: memory.clone(),
                    choices: t2,
                },
            ]))
        }
        EquilibriumKind::Correlated => {
            let mut choices = vec![Vec::new(); 4];
            for (mode, per_state) in choices.iter_mut().enumerate() {
                for s in 0..n {
                    let (m2, n2) = (g.num_actions(Player::One, s), g.num_actions(Player::Two, s));
                    let effective = mode | memory.bits(s);
                    let d = match (&local[s], effective) {
                        (Some(Local::Joint(j)), 0) => j.clone(),
                        _ => {
                            let (a, b) = joint_for(effective, s);
                            JointDistribution::product(&dirac(m2, a), &dirac(n2, b))
                        }
                    };
                    per_state.push(d);
                }
            }
            Profile::Correlated(JointStrategy { memory, choices })
        }
    };
    Ok(EquilibriumResult {
        values: x,
        iterations,
        residual,
        converged: true,
        pmax: [pmax1, pmax2],
        profile,
    })
}
