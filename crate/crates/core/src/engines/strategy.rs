use std::fmt::Write as _;

use super::EngineError;
use crate::game::{Player, StateId, StateSet, TwoPlayerGame};
use crate::matrix::JointDistribution;

/// Memory structure of a strategy.
#[derive(Debug, Clone, PartialEq)]
pub enum Memory {
    Memoryless,
    /// Mode is a bitmask of the goals visited so far (bit 0: first goal,
    /// bit 1: second goal), including the current state.
    GoalsReached(Box<[StateSet; 2]>),
}

impl Memory {
    pub fn goals(goal1: StateSet, goal2: StateSet) -> Self {
        Memory::GoalsReached(Box::new([goal1, goal2]))
    }

    pub fn modes(&self) -> usize {
        match self {
            Memory::Memoryless => 1,
            Memory::GoalsReached(_) => 4,
        }
    }

    pub fn bits(&self, s: StateId) -> usize {
        match self {
            Memory::Memoryless => 0,
            Memory::GoalsReached(g) => usize::from(g[0].contains(s)) | (usize::from(g[1].contains(s)) << 1),
        }
    }

    /// Mode on entering `s` from a fresh start.
    pub fn initial(&self, s: StateId) -> usize {
        self.bits(s)
    }

    /// Mode after moving to `t` in mode `mode`.
    pub fn next(&self, mode: usize, t: StateId) -> usize {
        mode | self.bits(t)
    }

    /// Whether `(mode, s)` can occur in a play.
    pub fn consistent(&self, mode: usize, s: StateId) -> bool {
        mode & self.bits(s) == self.bits(s)
    }

    pub fn mode_name(&self, mode: usize) -> String {
        let mut parts = Vec::new();
        if mode & 1 != 0 {
            parts.push("g1");
        }
        if mode & 2 != 0 {
            parts.push("g2");
        }
        format!("{{{}}}", parts.join(","))
    }
}

/// Randomized strategy of one side: a distribution over its actions for
/// every `(mode, state)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Strategy {
    pub player: Player,
    pub memory: Memory,
    /// Indexed `[mode][state][action]`.
    pub choices: Vec<Vec<Vec<f64>>>,
}

fn fmt_prob(p: f64) -> String {
    format!("{p}")
}

impl Strategy {
    pub fn memoryless(player: Player, choices: Vec<Vec<f64>>) -> Self {
        Strategy {
            player,
            memory: Memory::Memoryless,
            choices: vec![choices],
        }
    }

    pub fn choice(&self, mode: usize, s: StateId) -> &[f64] {
        &self.choices[mode][s]
    }

    /// Deterministic choice at `(mode, s)`, if any.
    pub fn action(&self, mode: usize, s: StateId) -> Option<usize> {
        let d = self.choice(mode, s);
        let support: Vec<usize> = (0..d.len()).filter(|&i| d[i] > 0.0).collect();
        (support.len() == 1).then(|| support[0])
    }

    pub fn is_deterministic(&self) -> bool {
        self.choices
            .iter()
            .all(|per_state| per_state.iter().all(|d| d.iter().filter(|&&p| p > 0.0).count() == 1))
    }

    pub fn validate(&self, g: &TwoPlayerGame) -> Result<(), EngineError> {
        if self.choices.len() != self.memory.modes() {
            return Err(EngineError::InvalidStrategy(format!(
                "expected {} modes, found {}",
                self.memory.modes(),
                self.choices.len()
            )));
        }
        for (m, per_state) in self.choices.iter().enumerate() {
            if per_state.len() != g.num_states() {
                return Err(EngineError::InvalidStrategy(format!(
                    "mode {m} covers {} of {} states",
                    per_state.len(),
                    g.num_states()
                )));
            }
            for (s, d) in per_state.iter().enumerate() {
                check_distribution(d, g.num_actions(self.player, s), m, s)?;
            }
        }
        Ok(())
    }

    /// Text export: `strategy <name>` then one line per `(mode, state)`.
    pub fn export(&self, g: &TwoPlayerGame, name: &str) -> String {
        let mut out = format!("strategy {name}\n");
        for (m, per_state) in self.choices.iter().enumerate() {
            for (s, d) in per_state.iter().enumerate() {
                if !self.memory.consistent(m, s) {
                    continue;
                }
                let labels = g.action_labels(self.player, s);
                let _ = write!(out, "mode {} state {s} :", self.memory.mode_name(m));
                for (a, &p) in d.iter().enumerate() {
                    if p > 0.0 {
                        let _ = write!(out, " {} {}", labels[a], fmt_prob(p));
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

fn check_distribution(d: &[f64], actions: usize, mode: usize, s: StateId) -> Result<(), EngineError> {
    if d.len() != actions {
        return Err(EngineError::InvalidStrategy(format!(
            "mode {mode} state {s}: {} probabilities for {actions} actions",
            d.len()
        )));
    }
    let sum: f64 = d.iter().sum();
    if d.iter().any(|p| !(0.0..=1.0 + 1e-9).contains(p)) || (sum - 1.0).abs() > 1e-9 {
        return Err(EngineError::InvalidStrategy(format!(
            "mode {mode} state {s}: not a distribution (sum {sum})"
        )));
    }
    Ok(())
}

/// Correlated strategy: a joint distribution over action pairs per
/// `(mode, state)`, as produced for correlated equilibria.
#[derive(Debug, Clone, PartialEq)]
pub struct JointStrategy {
    pub memory: Memory,
    /// Indexed `[mode][state]`.
    pub choices: Vec<Vec<JointDistribution>>,
}

impl JointStrategy {
    pub fn validate(&self, g: &TwoPlayerGame) -> Result<(), EngineError> {
        if self.choices.len() != self.memory.modes() {
            return Err(EngineError::InvalidStrategy("wrong number of modes".into()));
        }
        for (m, per_state) in self.choices.iter().enumerate() {
            if per_state.len() != g.num_states() {
                return Err(EngineError::InvalidStrategy(format!(
                    "mode {m} does not cover every state"
                )));
            }
            for (s, d) in per_state.iter().enumerate() {
                if d.rows != g.num_actions(Player::One, s) || d.cols != g.num_actions(Player::Two, s) {
                    return Err(EngineError::InvalidStrategy(format!("mode {m} state {s}: wrong shape")));
                }
                check_distribution(&d.probs, d.probs.len(), m, s)?;
            }
        }
        Ok(())
    }

    pub fn export(&self, g: &TwoPlayerGame) -> String {
        let mut out = String::from("strategy joint\n");
        for (m, per_state) in self.choices.iter().enumerate() {
            for (s, d) in per_state.iter().enumerate() {
                if !self.memory.consistent(m, s) {
                    continue;
                }
                let r = g.action_labels(Player::One, s);
                let c = g.action_labels(Player::Two, s);
                let _ = write!(out, "mode {} state {s} :", self.memory.mode_name(m));
                for a in 0..d.rows {
                    for b in 0..d.cols {
                        let p = d.get(a, b);
                        if p > 0.0 {
                            let _ = write!(out, " {}|{} {}", r[a], c[b], fmt_prob(p));
                        }
                    }
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Strategies of both sides, either independent or correlated.
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Independent(Box<[Strategy; 2]>),
    Correlated(JointStrategy),
}

impl Profile {
    pub fn memory(&self) -> &Memory {
        match self {
            Profile::Independent(s) => &s[0].memory,
            Profile::Correlated(j) => &j.memory,
        }
    }

    pub fn validate(&self, g: &TwoPlayerGame) -> Result<(), EngineError> {
        match self {
            Profile::Independent(s) => {
                if s[0].player != Player::One || s[1].player != Player::Two {
                    return Err(EngineError::InvalidStrategy("profile sides out of order".into()));
                }
                s[0].validate(g)?;
                s[1].validate(g)
            }
            Profile::Correlated(j) => j.validate(g),
        }
    }

    /// Joint distribution played at `(mode, s)`.
    pub fn joint(&self, mode: usize, s: StateId) -> JointDistribution {
        match self {
            Profile::Independent(st) => JointDistribution::product(st[0].choice(mode, s), st[1].choice(mode, s)),
            Profile::Correlated(j) => j.choices[mode][s].clone(),
        }
    }
}
