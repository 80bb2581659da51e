//! Runs a parsed query against a model.

use thiserror::Error;

use crate::engines::{
    bounded_reach, certify_zero_sum, check_epsilon_equilibrium, equilibrium_vi, zero_sum_expected_reward,
    zero_sum_reach, EngineError, EngineSettings, Objective, Profile, ZeroSumResult,
};
use crate::game::{coalition_view, CoalitionSpec, GameError, GameModel, StateSet, TwoPlayerGame};
use crate::matrix::Criterion;
use crate::query::{EquilibriumKind, Optimum, PathFormula, PlayerNames, ProbBound, Query};

/// Slack allowed when comparing a computed probability with a bound.
pub const BOUND_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckOptions {
    pub settings: EngineSettings,
    /// Also compute best-response certificates.
    pub certify: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Values {
    Scalar(Vec<f64>),
    Pair(Vec<(f64, f64)>),
}

impl Values {
    pub fn len(&self) -> usize {
        match self {
            Values::Scalar(v) => v.len(),
            Values::Pair(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Value {
    Scalar(f64),
    Pair(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExportedStrategy {
    /// Who plays it: a coalition such as `P1,P3`, or `joint`.
    pub player: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub gaps: [f64; 2],
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    /// Short description of what was computed, e.g. `Pmax` or `ne,sw`.
    pub mode: String,
    /// Value at the initial state.
    pub value: Value,
    pub per_state: Values,
    /// Verdict for threshold queries.
    pub satisfied: Option<bool>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub strategies: Vec<ExportedStrategy>,
    pub certificate: Option<Certificate>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("query refers to player {player}, but the model has {players} players")]
    PlayerCount { player: usize, players: usize },
}

fn coalition_name(c: &CoalitionSpec, names: &PlayerNames) -> String {
    c.members().map(|p| names.name(p)).collect::<Vec<_>>().join(",")
}

fn goal_set(g: &TwoPlayerGame, label: &str, warnings: &mut Vec<String>) -> StateSet {
    g.label(label).unwrap_or_else(|| {
        warnings.push(format!("label '{label}' is not declared; treating it as empty"));
        StateSet::empty(g.num_states())
    })
}

fn zero_sum_strategies(
    res: &ZeroSumResult,
    g: &TwoPlayerGame,
    coalition: &CoalitionSpec,
    model: &GameModel,
    names: &PlayerNames,
) -> Vec<ExportedStrategy> {
    let rest = coalition.complement(model.players);
    let mut out = vec![ExportedStrategy {
        player: coalition_name(coalition, names),
        text: res.strategies[0].export(g, &coalition_name(coalition, names)),
    }];
    if !rest.is_empty() {
        out.push(ExportedStrategy {
            player: coalition_name(&rest, names),
            text: res.strategies[1].export(g, &coalition_name(&rest, names)),
        });
    }
    out
}

/// Evaluates `query` on `model`.
pub fn check(
    model: &GameModel,
    query: &Query,
    opts: &CheckOptions,
    names: &PlayerNames,
) -> Result<CheckOutcome, CheckError> {
    let players = model.players;
    let max_player = match query {
        Query::Probability { coalition, .. } | Query::Reward { coalition, .. } => coalition.members().max(),
        Query::Equilibrium { coalitions, .. } => coalitions.iter().flat_map(|c| c.members()).max(),
    };
    if let Some(p) = max_player.filter(|&p| p > players) {
        return Err(CheckError::PlayerCount { player: p, players });
    }
    let settings = &opts.settings;
    let tolerance = 10.0 * settings.epsilon;
    let mut warnings = Vec::new();
    match query {
        Query::Probability { coalition, bound, path } => {
            let g = coalition_view(model, coalition)?;
            let goal = goal_set(&g, path.target(), &mut warnings);
            let optimum = bound.optimum();
            let (values, iterations, residual, strategies, certificate, mode_steps) = match path {
                PathFormula::BoundedEventually(_, k) => {
                    let v = bounded_reach(&g, &goal, *k, optimum, settings)?;
                    if opts.certify {
                        warnings.push("certificates are not available for step-bounded queries".into());
                    }
                    (v.values, v.iterations, v.residual, Vec::new(), None, Some(*k))
                }
                PathFormula::Eventually(_) => {
                    let res = zero_sum_reach(&g, &goal, optimum, settings)?;
                    let certificate = if opts.certify {
                        let objective = Objective::Reach {
                            goal: goal.clone(),
                            maximize: optimum == Optimum::Max,
                        };
                        let c = certify_zero_sum(&g, &res, &objective, tolerance)?;
                        Some(Certificate {
                            gaps: c.gaps,
                            pass: c.pass,
                        })
                    } else {
                        None
                    };
                    let strategies = zero_sum_strategies(&res, &g, coalition, model, names);
                    (
                        res.values.values,
                        res.values.iterations,
                        res.values.residual,
                        strategies,
                        certificate,
                        None,
                    )
                }
            };
            let init = values[g.initial];
            let satisfied = match bound {
                ProbBound::AtLeast(p) => Some(init >= p - BOUND_TOLERANCE),
                ProbBound::AtMost(p) => Some(init <= p + BOUND_TOLERANCE),
                _ => None,
            };
            let mut mode = match bound {
                ProbBound::Max => "Pmax".to_string(),
                ProbBound::Min => "Pmin".to_string(),
                ProbBound::AtLeast(p) => format!("P>={p}"),
                ProbBound::AtMost(p) => format!("P<={p}"),
            };
            if let Some(k) = mode_steps {
                mode.push_str(&format!(" F<={k}"));
            }
            Ok(CheckOutcome {
                mode,
                value: Value::Scalar(init),
                per_state: Values::Scalar(values),
                satisfied,
                iterations,
                residual,
                converged: true,
                strategies,
                certificate,
                warnings,
            })
        }
        Query::Reward {
            coalition,
            optimum,
            reward,
            target,
        } => {
            let g = coalition_view(model, coalition)?;
            let goal = goal_set(&g, target, &mut warnings);
            let res = zero_sum_expected_reward(&g, reward, &goal, *optimum, settings)?;
            let certificate = if opts.certify {
                let objective = Objective::Reward {
                    name: reward.clone(),
                    goal: goal.clone(),
                    maximize: *optimum == Optimum::Max,
                };
                let c = certify_zero_sum(&g, &res, &objective, tolerance)?;
                Some(Certificate {
                    gaps: c.gaps,
                    pass: c.pass,
                })
            } else {
                None
            };
            let strategies = zero_sum_strategies(&res, &g, coalition, model, names);
            let values = res.values.values;
            Ok(CheckOutcome {
                mode: match optimum {
                    Optimum::Max => "Rmax".into(),
                    Optimum::Min => "Rmin".into(),
                },
                value: Value::Scalar(values[g.initial]),
                per_state: Values::Scalar(values),
                satisfied: None,
                iterations: res.values.iterations,
                residual: res.values.residual,
                converged: true,
                strategies,
                certificate,
                warnings,
            })
        }
        Query::Equilibrium {
            coalitions,
            targets,
            kind,
            criterion,
        } => {
            let g = coalition_view(model, &coalitions[0])?;
            let goal1 = goal_set(&g, &targets[0], &mut warnings);
            let goal2 = goal_set(&g, &targets[1], &mut warnings);
            let mut settings = settings.clone();
            settings.kind = kind.unwrap_or(settings.kind);
            settings.criterion = criterion.unwrap_or(settings.criterion);
            let res = equilibrium_vi(&g, &goal1, &goal2, &settings)?;
            let certificate = if opts.certify {
                let c = check_epsilon_equilibrium(&g, &res.profile, [&goal1, &goal2], tolerance)?;
                Some(Certificate {
                    gaps: c.gaps,
                    pass: c.pass,
                })
            } else {
                None
            };
            let strategies = match &res.profile {
                Profile::Independent(s) => (0..2)
                    .map(|i| {
                        let name = coalition_name(&coalitions[i], names);
                        ExportedStrategy {
                            text: s[i].export(&g, &name),
                            player: name,
                        }
                    })
                    .collect(),
                Profile::Correlated(j) => vec![ExportedStrategy {
                    player: "joint".into(),
                    text: j.export(&g),
                }],
            };
            let mode = format!(
                "{},{}",
                match settings.kind {
                    EquilibriumKind::Nash => "ne",
                    EquilibriumKind::Correlated => "ce",
                },
                match settings.criterion {
                    Criterion::SocialWelfare => "sw",
                    Criterion::SocialFairness => "sf",
                }
            );
            let (a, b) = res.values[g.initial];
            Ok(CheckOutcome {
                mode,
                value: Value::Pair(a, b),
                per_state: Values::Pair(res.values),
                satisfied: None,
                iterations: res.iterations,
                residual: res.residual,
                converged: res.converged,
                strategies,
                certificate,
                warnings,
            })
        }
    }
}
