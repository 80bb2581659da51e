//! Turn-based and concurrent stochastic game models, coalition reduction
//! to two-player form and the induced single-controller view.
//!
//! A [`GameModel`] is the faithful n-player model as read from a file. All
//! engines consume a [`TwoPlayerGame`]: player 1 is a coalition of the
//! original players, player 2 is the rest. Turn-based games are stored as
//! degenerate concurrent games where every non-owner has a single dummy
//! action, so one dense layout serves every engine.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

pub type StateId = usize;
/// 1-based player identifier as written in model files and queries.
pub type PlayerId = usize;
/// Per-player action indices, in player order.
pub type JointAction = Vec<usize>;

/// Label of the single action a non-owner has in a turn-based state.
pub const DUMMY_ACTION: &str = "_";

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GameKind {
    Tsg,
    Csg,
}

impl fmt::Display for GameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GameKind::Tsg => f.write_str("tsg"),
            GameKind::Csg => f.write_str("csg"),
        }
    }
}

/// A probability distribution over successor states, sorted by state id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Distribution {
    entries: Vec<(StateId, f64)>,
}

impl Distribution {
    /// Builds a distribution without checking it; see [`validate`].
    pub fn new(mut entries: Vec<(StateId, f64)>) -> Self {
        entries.sort_by_key(|&(s, _)| s);
        Distribution { entries }
    }

    pub fn dirac(state: StateId) -> Self {
        Distribution {
            entries: vec![(state, 1.0)],
        }
    }

    pub fn entries(&self) -> &[(StateId, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn support(&self) -> impl Iterator<Item = StateId> + '_ {
        self.entries.iter().map(|&(s, _)| s)
    }

    pub fn sum(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }

    /// Expected value of `values` under this distribution.
    pub fn expect(&self, values: &[f64]) -> f64 {
        self.entries.iter().map(|&(s, p)| p * values[s]).sum()
    }
}

/// An n-player stochastic game.
#[derive(Debug, Clone, PartialEq)]
pub struct GameModel {
    pub kind: GameKind,
    pub players: usize,
    pub states: usize,
    pub initial: StateId,
    /// Owner of each state (1-based); turn-based games only.
    pub owner: Option<Vec<PlayerId>>,
    /// `actions[player - 1][state]` is the ordered list of action labels.
    pub actions: Vec<Vec<Vec<String>>>,
    pub transitions: BTreeMap<(StateId, JointAction), Distribution>,
    pub labels: BTreeMap<String, BTreeSet<StateId>>,
    pub rewards: BTreeMap<String, BTreeMap<(StateId, JointAction), f64>>,
}

impl GameModel {
    /// Renders a joint action with its labels, e.g. `a,c`.
    pub fn joint_label(&self, state: StateId, joint: &[usize]) -> String {
        if let (Some(owner), true) = (&self.owner, self.kind == GameKind::Tsg) {
            if let Some(&o) = owner.get(state) {
                if let Some(label) = self.action_label(o, state, joint.get(o - 1).copied()) {
                    return label.to_string();
                }
            }
        }
        joint
            .iter()
            .enumerate()
            .map(|(p, &a)| self.action_label(p + 1, state, Some(a)).unwrap_or("?"))
            .collect::<Vec<_>>()
            .join(",")
    }

    fn action_label(&self, player: PlayerId, state: StateId, action: Option<usize>) -> Option<&str> {
        let action = action?;
        self.actions
            .get(player.checked_sub(1)?)?
            .get(state)?
            .get(action)
            .map(String::as_str)
    }

    /// Every joint action available at `state`, in lexicographic index order.
    pub fn joint_actions(&self, state: StateId) -> Vec<JointAction> {
        let sizes: Vec<usize> = (0..self.players)
            .map(|p| self.actions.get(p).and_then(|a| a.get(state)).map_or(0, Vec::len))
            .collect();
        product_indices(&sizes)
    }

    pub fn label(&self, name: &str) -> Option<&BTreeSet<StateId>> {
        self.labels.get(name)
    }
}

/// All index vectors of a mixed-radix product, first position most significant.
pub(crate) fn product_indices(sizes: &[usize]) -> Vec<Vec<usize>> {
    let total: usize = sizes.iter().product();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    let mut current = vec![0; sizes.len()];
    loop {
        out.push(current.clone());
        let mut pos = sizes.len();
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            current[pos] += 1;
            if current[pos] < sizes[pos] {
                break;
            }
            current[pos] = 0;
        }
    }
}

/// A violated model invariant, with enough context to locate it.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model must have at least one player")]
    NoPlayers,
    #[error("model must have at least one state")]
    NoStates,
    #[error("initial state {0} is out of range")]
    InitialOutOfRange(StateId),
    #[error("turn-based model is missing the owner vector")]
    MissingOwner,
    #[error("owner vector has {found} entries, expected {expected}")]
    OwnerLength { expected: usize, found: usize },
    #[error("owner {owner} of state {state} is out of range")]
    OwnerOutOfRange { state: StateId, owner: PlayerId },
    #[error("concurrent model must not have an owner vector")]
    UnexpectedOwner,
    #[error("action table shape does not match {players} players and {states} states")]
    ActionShape { players: usize, states: usize },
    #[error("player {player} has no available action in state {state}")]
    NoActions { player: PlayerId, state: StateId },
    #[error("player {player} does not own state {state} and must have exactly one dummy action")]
    NonOwnerActions { player: PlayerId, state: StateId },
    #[error("duplicate action label '{label}' for player {player} in state {state}")]
    DuplicateActionLabel {
        player: PlayerId,
        state: StateId,
        label: String,
    },
    #[error("state {state}: no transition for joint action {action}")]
    MissingTransition { state: StateId, action: String },
    #[error("state {state}: transition for unavailable joint action {action:?}")]
    UnavailableAction { state: StateId, action: JointAction },
    #[error("state {state}, action {action}: distribution sums to {sum}")]
    ProbabilitySum { state: StateId, action: String, sum: f64 },
    #[error("state {state}, action {action}: probability {prob} for successor {target} is not in (0,1]")]
    BadProbability {
        state: StateId,
        action: String,
        target: StateId,
        prob: f64,
    },
    #[error("state {state}, action {action}: successor {target} listed twice")]
    DuplicateSuccessor {
        state: StateId,
        action: String,
        target: StateId,
    },
    #[error("{context} refers to undefined state {state}")]
    DanglingState { context: String, state: StateId },
    #[error("reward '{name}' at state {state}, action {action:?}: value {value} must be finite and nonnegative")]
    BadReward {
        name: String,
        state: StateId,
        action: JointAction,
        value: f64,
    },
}

/// Checks every model invariant and returns all violations.
pub fn validate(model: &GameModel) -> Result<(), Vec<ModelError>> {
    let mut errors = Vec::new();
    if model.players == 0 {
        errors.push(ModelError::NoPlayers);
    }
    if model.states == 0 {
        errors.push(ModelError::NoStates);
    }
    if !errors.is_empty() {
        return Err(errors);
    }
    if model.initial >= model.states {
        errors.push(ModelError::InitialOutOfRange(model.initial));
    }
    match (model.kind, &model.owner) {
        (GameKind::Tsg, None) => errors.push(ModelError::MissingOwner),
        (GameKind::Tsg, Some(owner)) => {
            if owner.len() != model.states {
                errors.push(ModelError::OwnerLength {
                    expected: model.states,
                    found: owner.len(),
                });
            }
            for (state, &o) in owner.iter().enumerate() {
                if o == 0 || o > model.players {
                    errors.push(ModelError::OwnerOutOfRange { state, owner: o });
                }
            }
        }
        (GameKind::Csg, Some(_)) => errors.push(ModelError::UnexpectedOwner),
        (GameKind::Csg, None) => {}
    }
    if model.actions.len() != model.players || model.actions.iter().any(|per_state| per_state.len() != model.states) {
        errors.push(ModelError::ActionShape {
            players: model.players,
            states: model.states,
        });
        return Err(errors);
    }
    let owner_of = |s: StateId| -> Option<PlayerId> {
        model
            .owner
            .as_ref()
            .filter(|_| model.kind == GameKind::Tsg)
            .and_then(|o| o.get(s).copied())
    };
    for state in 0..model.states {
        for player in 1..=model.players {
            let labels = &model.actions[player - 1][state];
            if labels.is_empty() {
                errors.push(ModelError::NoActions { player, state });
            }
            if let Some(o) = owner_of(state) {
                if o != player && (labels.len() != 1 || labels[0] != DUMMY_ACTION) {
                    errors.push(ModelError::NonOwnerActions { player, state });
                }
            }
            let mut seen = BTreeSet::new();
            for label in labels {
                if !seen.insert(label) {
                    errors.push(ModelError::DuplicateActionLabel {
                        player,
                        state,
                        label: label.clone(),
                    });
                }
            }
        }
    }
    let available = |state: StateId, joint: &JointAction| -> bool {
        state < model.states
            && joint.len() == model.players
            && joint
                .iter()
                .enumerate()
                .all(|(p, &a)| a < model.actions[p][state].len())
    };
    for ((state, joint), dist) in &model.transitions {
        if !available(*state, joint) {
            errors.push(ModelError::UnavailableAction {
                state: *state,
                action: joint.clone(),
            });
            continue;
        }
        let action = model.joint_label(*state, joint);
        let mut seen = BTreeSet::new();
        for (target, prob) in dist.iter() {
            if target >= model.states {
                errors.push(ModelError::DanglingState {
                    context: format!("transition from state {state} under {action}"),
                    state: target,
                });
            }
            if !(prob > 0.0 && prob <= 1.0) {
                errors.push(ModelError::BadProbability {
                    state: *state,
                    action: action.clone(),
                    target,
                    prob,
                });
            }
            if !seen.insert(target) {
                errors.push(ModelError::DuplicateSuccessor {
                    state: *state,
                    action: action.clone(),
                    target,
                });
            }
        }
        let sum = dist.sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            errors.push(ModelError::ProbabilitySum {
                state: *state,
                action,
                sum,
            });
        }
    }
    for state in 0..model.states {
        for joint in model.joint_actions(state) {
            if !model.transitions.contains_key(&(state, joint.clone())) {
                errors.push(ModelError::MissingTransition {
                    state,
                    action: model.joint_label(state, &joint),
                });
            }
        }
    }
    for (name, states) in &model.labels {
        for &s in states {
            if s >= model.states {
                errors.push(ModelError::DanglingState {
                    context: format!("label '{name}'"),
                    state: s,
                });
            }
        }
    }
    for (name, entries) in &model.rewards {
        for ((state, joint), &value) in entries {
            if !available(*state, joint) {
                errors.push(ModelError::UnavailableAction {
                    state: *state,
                    action: joint.clone(),
                });
            }
            if !(value.is_finite() && value >= 0.0) {
                errors.push(ModelError::BadReward {
                    name: name.clone(),
                    state: *state,
                    action: joint.clone(),
                    value,
                });
            }
        }
    }
    if errors.is_empty() {
        Ok(())
    } else {
        Err(errors)
    }
}

/// A nonempty set of players acting as one; the complement opposes them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CoalitionSpec(BTreeSet<PlayerId>);

impl CoalitionSpec {
    pub fn new(players: impl IntoIterator<Item = PlayerId>) -> Self {
        CoalitionSpec(players.into_iter().collect())
    }

    pub fn contains(&self, player: PlayerId) -> bool {
        self.0.contains(&player)
    }

    pub fn members(&self) -> impl Iterator<Item = PlayerId> + '_ {
        self.0.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_disjoint(&self, other: &CoalitionSpec) -> bool {
        self.0.is_disjoint(&other.0)
    }

    /// Players of `1..=players` not in this coalition.
    pub fn complement(&self, players: usize) -> CoalitionSpec {
        CoalitionSpec((1..=players).filter(|p| !self.0.contains(p)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GameError {
    #[error("coalition must not be empty")]
    EmptyCoalition,
    #[error("player {player} is out of range (model has {players} players)")]
    PlayerOutOfRange { player: PlayerId, players: usize },
    #[error("invalid model: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ModelError>),
}

/// One side of a two-player game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Player {
    One,
    Two,
}

impl Player {
    pub fn index(self) -> usize {
        match self {
            Player::One => 0,
            Player::Two => 1,
        }
    }

    pub fn number(self) -> usize {
        self.index() + 1
    }

    pub fn other(self) -> Player {
        match self {
            Player::One => Player::Two,
            Player::Two => Player::One,
        }
    }
}

impl fmt::Display for Player {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Canonical two-player form consumed by every engine.
///
/// Joint action `(a, b)` at state `s` is stored at flat index
/// `a * n2(s) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPlayerGame {
    pub kind: GameKind,
    pub initial: StateId,
    /// Owner side per state; turn-based games only.
    owner: Option<Vec<Player>>,
    actions: [Vec<Vec<String>>; 2],
    transitions: Vec<Vec<Distribution>>,
    labels: BTreeMap<String, BTreeSet<StateId>>,
    rewards: BTreeMap<String, Vec<Vec<f64>>>,
    back: Vec<Vec<JointAction>>,
}

impl TwoPlayerGame {
    pub fn num_states(&self) -> usize {
        self.transitions.len()
    }

    pub fn num_actions(&self, player: Player, state: StateId) -> usize {
        self.actions[player.index()][state].len()
    }

    pub fn action_labels(&self, player: Player, state: StateId) -> &[String] {
        &self.actions[player.index()][state]
    }

    pub fn owner(&self, state: StateId) -> Option<Player> {
        self.owner.as_ref().map(|o| o[state])
    }

    pub fn is_turn_based(&self) -> bool {
        self.kind == GameKind::Tsg && self.owner.is_some()
    }

    pub fn transition(&self, state: StateId, a: usize, b: usize) -> &Distribution {
        let n2 = self.num_actions(Player::Two, state);
        &self.transitions[state][a * n2 + b]
    }

    /// Original joint action behind `(a, b)`.
    pub fn original_action(&self, state: StateId, a: usize, b: usize) -> &JointAction {
        let n2 = self.num_actions(Player::Two, state);
        &self.back[state][a * n2 + b]
    }

    pub fn labels(&self) -> &BTreeMap<String, BTreeSet<StateId>> {
        &self.labels
    }

    pub fn label(&self, name: &str) -> Option<StateSet> {
        self.labels
            .get(name)
            .map(|set| StateSet::from_states(self.num_states(), set.iter().copied()))
    }

    pub fn has_reward(&self, name: &str) -> bool {
        self.rewards.contains_key(name)
    }

    pub fn reward(&self, name: &str, state: StateId, a: usize, b: usize) -> f64 {
        let n2 = self.num_actions(Player::Two, state);
        self.rewards.get(name).map_or(0.0, |r| r[state][a * n2 + b])
    }

    /// Every `(state, a, b)` triple of the game, state-major.
    pub fn choices(&self) -> impl Iterator<Item = (StateId, usize, usize)> + '_ {
        (0..self.num_states()).flat_map(move |s| {
            let n1 = self.num_actions(Player::One, s);
            let n2 = self.num_actions(Player::Two, s);
            (0..n1).flat_map(move |a| (0..n2).map(move |b| (s, a, b)))
        })
    }

    /// States reachable from the initial state.
    pub fn reachable(&self) -> StateSet {
        let n = self.num_states();
        let mut seen = vec![false; n];
        let mut stack = vec![self.initial];
        seen[self.initial] = true;
        while let Some(s) = stack.pop() {
            for dist in &self.transitions[s] {
                for t in dist.support() {
                    if !seen[t] {
                        seen[t] = true;
                        stack.push(t);
                    }
                }
            }
        }
        StateSet::from_mask(seen)
    }
}

/// A set of states stored as a membership mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    mask: Vec<bool>,
}

impl StateSet {
    pub fn empty(n: usize) -> Self {
        StateSet { mask: vec![false; n] }
    }

    pub fn full(n: usize) -> Self {
        StateSet { mask: vec![true; n] }
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        StateSet { mask }
    }

    pub fn from_states(n: usize, states: impl IntoIterator<Item = StateId>) -> Self {
        let mut mask = vec![false; n];
        for s in states {
            mask[s] = true;
        }
        StateSet { mask }
    }

    pub fn contains(&self, s: StateId) -> bool {
        self.mask[s]
    }

    pub fn insert(&mut self, s: StateId) -> bool {
        !std::mem::replace(&mut self.mask[s], true)
    }

    pub fn universe(&self) -> usize {
        self.mask.len()
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.mask.iter().any(|&b| b)
    }

    pub fn iter(&self) -> impl Iterator<Item = StateId> + '_ {
        self.mask.iter().enumerate().filter(|(_, &b)| b).map(|(s, _)| s)
    }

    pub fn as_mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn union(&self, other: &StateSet) -> StateSet {
        StateSet {
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a || *b).collect(),
        }
    }

    pub fn intersection(&self, other: &StateSet) -> StateSet {
        StateSet {
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && *b).collect(),
        }
    }

    pub fn difference(&self, other: &StateSet) -> StateSet {
        StateSet {
            mask: self.mask.iter().zip(&other.mask).map(|(a, b)| *a && !*b).collect(),
        }
    }

    pub fn complement(&self) -> StateSet {
        StateSet {
            mask: self.mask.iter().map(|b| !b).collect(),
        }
    }
}

fn check_coalition(model: &GameModel, spec: &CoalitionSpec) -> Result<(), GameError> {
    if spec.is_empty() {
        return Err(GameError::EmptyCoalition);
    }
    for p in spec.members() {
        if p == 0 || p > model.players {
            return Err(GameError::PlayerOutOfRange {
                player: p,
                players: model.players,
            });
        }
    }
    Ok(())
}

/// Reduces `model` to a two-player game where player 1 controls the
/// product of the coalition members' actions and player 2 the product of
/// everyone else's.
pub fn coalition_view(model: &GameModel, spec: &CoalitionSpec) -> Result<TwoPlayerGame, GameError> {
    validate(model).map_err(GameError::Invalid)?;
    check_coalition(model, spec)?;
    let first: Vec<PlayerId> = spec.members().collect();
    let second: Vec<PlayerId> = spec.complement(model.players).members().collect();
    Ok(build_view(model, [&first, &second], model.kind))
}

/// Merges all players into player 1; player 2 gets one dummy action
/// everywhere. The result is a turn-based game owned by player 1.
pub fn as_mdp(model: &GameModel) -> Result<TwoPlayerGame, GameError> {
    validate(model).map_err(GameError::Invalid)?;
    let all: Vec<PlayerId> = (1..=model.players).collect();
    Ok(build_view(model, [&all, &Vec::new()], GameKind::Tsg))
}

fn build_view(model: &GameModel, sides: [&Vec<PlayerId>; 2], kind: GameKind) -> TwoPlayerGame {
    let n = model.states;
    let mut actions: [Vec<Vec<String>>; 2] = [Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut transitions = Vec::with_capacity(n);
    let mut back = Vec::with_capacity(n);
    let mut rewards: BTreeMap<String, Vec<Vec<f64>>> = model
        .rewards
        .keys()
        .map(|k| (k.clone(), Vec::with_capacity(n)))
        .collect();
    let tsg_owner = match model.kind {
        GameKind::Tsg => model.owner.as_ref(),
        GameKind::Csg => None,
    };

    for s in 0..n {
        let mut side_tuples: [Vec<Vec<usize>>; 2] = [Vec::new(), Vec::new()];
        for (i, members) in sides.iter().enumerate() {
            let sizes: Vec<usize> = members.iter().map(|&p| model.actions[p - 1][s].len()).collect();
            let tuples = product_indices(&sizes);
            let labels = tuples
                .iter()
                .map(|t| {
                    if members.is_empty() {
                        return DUMMY_ACTION.to_string();
                    }
                    if let Some(owner) = tsg_owner {
                        let o = owner[s];
                        return match members.iter().position(|&p| p == o) {
                            Some(pos) => model.actions[o - 1][s][t[pos]].clone(),
                            None => DUMMY_ACTION.to_string(),
                        };
                    }
                    members
                        .iter()
                        .zip(t)
                        .map(|(&p, &a)| model.actions[p - 1][s][a].as_str())
                        .collect::<Vec<_>>()
                        .join(",")
                })
                .collect();
            actions[i].push(labels);
            side_tuples[i] = tuples;
        }
        let mut row = Vec::new();
        let mut back_row = Vec::new();
        for t1 in &side_tuples[0] {
            for t2 in &side_tuples[1] {
                let mut joint = vec![0; model.players];
                for (&p, &a) in sides[0].iter().zip(t1) {
                    joint[p - 1] = a;
                }
                for (&p, &a) in sides[1].iter().zip(t2) {
                    joint[p - 1] = a;
                }
                row.push(model.transitions[&(s, joint.clone())].clone());
                back_row.push(joint);
            }
        }
        for (name, per_state) in rewards.iter_mut() {
            let table = &model.rewards[name];
            per_state.push(
                back_row
                    .iter()
                    .map(|j| table.get(&(s, j.clone())).copied().unwrap_or(0.0))
                    .collect(),
            );
        }
        transitions.push(row);
        back.push(back_row);
    }

    let owner = match kind {
        GameKind::Tsg => Some(
            (0..n)
                .map(|s| match tsg_owner {
                    Some(owner) if !sides[0].contains(&owner[s]) => Player::Two,
                    _ => Player::One,
                })
                .collect(),
        ),
        GameKind::Csg => None,
    };

    TwoPlayerGame {
        kind,
        initial: model.initial,
        owner,
        actions,
        transitions,
        labels: model.labels.clone(),
        rewards,
        back,
    }
}
