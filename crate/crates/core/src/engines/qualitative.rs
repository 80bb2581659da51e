//! Graph-based precomputation of probability-0 and probability-1 states.

use crate::game::{Distribution, Player, StateId, StateSet, TwoPlayerGame};

/// A game seen from one side: rows are `side`'s actions, columns the
/// opponent's.
#[derive(Clone, Copy)]
pub(crate) struct Oriented<'a> {
    pub g: &'a TwoPlayerGame,
    pub side: Player,
}

impl<'a> Oriented<'a> {
    pub fn new(g: &'a TwoPlayerGame, side: Player) -> Self {
        Oriented { g, side }
    }

    pub fn rows(&self, s: StateId) -> usize {
        self.g.num_actions(self.side, s)
    }

    pub fn cols(&self, s: StateId) -> usize {
        self.g.num_actions(self.side.other(), s)
    }

    /// Transition for `side` playing `x` and the opponent `y`.
    pub fn succ(&self, s: StateId, x: usize, y: usize) -> &'a Distribution {
        match self.side {
            Player::One => self.g.transition(s, x, y),
            Player::Two => self.g.transition(s, y, x),
        }
    }

    pub fn reward(&self, name: &str, s: StateId, x: usize, y: usize) -> f64 {
        match self.side {
            Player::One => self.g.reward(name, s, x, y),
            Player::Two => self.g.reward(name, s, y, x),
        }
    }

    fn hits(&self, s: StateId, x: usize, y: usize, set: &StateSet) -> bool {
        self.succ(s, x, y).support().any(|t| set.contains(t))
    }

    fn inside(&self, s: StateId, x: usize, y: usize, set: &StateSet) -> bool {
        self.succ(s, x, y).support().all(|t| set.contains(t))
    }

    /// Rows whose every outcome stays in `set`.
    pub fn safe_rows(&self, s: StateId, set: &StateSet) -> Vec<usize> {
        (0..self.rows(s))
            .filter(|&x| (0..self.cols(s)).all(|y| self.inside(s, x, y, set)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Qualitative {
    /// States where the maximizer cannot reach the goal with positive
    /// probability against optimal opposition.
    pub prob0: StateSet,
    /// States where the maximizer can reach the goal almost surely.
    pub prob1: StateSet,
}

/// Least fixpoint of `goal ∪ {s ∈ within : step(s, R)}`.
fn least_fixpoint(n: usize, goal: &StateSet, within: &StateSet, step: impl Fn(StateId, &StateSet) -> bool) -> StateSet {
    let mut r = goal.intersection(within);
    loop {
        let mut changed = false;
        let snapshot = r.clone();
        for s in 0..n {
            if !snapshot.contains(s) && within.contains(s) && step(s, &snapshot) {
                r.insert(s);
                changed = true;
            }
        }
        if !changed {
            return r;
        }
    }
}

/// States from which `v.side` reaches `goal` with positive probability
/// whatever the opponent does (uniform play over all rows suffices).
pub(crate) fn positive_set(v: Oriented<'_>, goal: &StateSet) -> StateSet {
    let n = v.g.num_states();
    least_fixpoint(n, goal, &StateSet::full(n), |s, r| {
        (0..v.cols(s)).all(|y| (0..v.rows(s)).any(|x| v.hits(s, x, y, r)))
    })
}

/// States from which `v.side` reaches `goal` almost surely.
pub(crate) fn almost_sure_set(v: Oriented<'_>, goal: &StateSet) -> StateSet {
    let n = v.g.num_states();
    let mut c = StateSet::full(n);
    loop {
        let next = least_fixpoint(n, goal, &c, |s, r| {
            let safe = v.safe_rows(s, &c);
            !safe.is_empty() && (0..v.cols(s)).all(|y| safe.iter().any(|&x| v.hits(s, x, y, r)))
        });
        if next == c {
            return c;
        }
        c = next;
    }
}

/// Qualitative reachability sets for `maximizer`.
pub fn qualitative_reach(g: &TwoPlayerGame, goal: &StateSet, maximizer: Player) -> Qualitative {
    let v = Oriented::new(g, maximizer);
    Qualitative {
        prob0: positive_set(v, goal).complement(),
        prob1: almost_sure_set(v, goal),
    }
}

/// Opponent column that keeps every outcome of `s` out of `positive`.
pub(crate) fn blocking_column(v: Oriented<'_>, s: StateId, positive: &StateSet) -> usize {
    (0..v.cols(s))
        .find(|&y| (0..v.rows(s)).all(|x| !v.hits(s, x, y, positive)))
        .unwrap_or(0)
}

/// Strategy of `v.side` reaching `goal` almost surely from every state of
/// `prob1`: a deterministic progress action where the opponent has no
/// choice, the uniform mix over safe rows otherwise.
pub(crate) fn almost_sure_choices(v: Oriented<'_>, goal: &StateSet, prob1: &StateSet) -> Vec<Option<Vec<f64>>> {
    let n = v.g.num_states();
    let mut out: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut layer = goal.intersection(prob1);
    loop {
        let snapshot = layer.clone();
        let mut changed = false;
        for s in prob1.iter() {
            if snapshot.contains(s) {
                continue;
            }
            let safe = v.safe_rows(s, prob1);
            let rows = v.rows(s);
            if v.cols(s) == 1 {
                if let Some(&x) = safe.iter().find(|&&x| v.hits(s, x, 0, &snapshot)) {
                    let mut d = vec![0.0; rows];
                    d[x] = 1.0;
                    out[s] = Some(d);
                    layer.insert(s);
                    changed = true;
                }
            } else if (0..v.cols(s)).all(|y| safe.iter().any(|&x| v.hits(s, x, y, &snapshot))) {
                let mut d = vec![0.0; rows];
                for &x in &safe {
                    d[x] = 1.0 / safe.len() as f64;
                }
                out[s] = Some(d);
                layer.insert(s);
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}
