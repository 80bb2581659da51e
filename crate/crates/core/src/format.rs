//! The `.sgm` explicit-state game format.
//!
//! ```text
//! game <tsg|csg>
//! players <n>
//! states <m>
//! init <state>
//! owner <p_0> ... <p_{m-1}>        # tsg only
//! actions <player> <state> <label> [<label> ...]
//! t <state> <a1[,a2,...,an]> : <prob> <state> [<prob> <state> ...]
//! label <name> [<state> ...]
//! reward <name> <state> <a1[,...]> <value>
//! ```
//!
//! Directives may appear in any order. Probabilities are decimals or exact
//! fractions `p/q`. Turn-based transition and reward lines name only the
//! owner's action; non-owners implicitly get the dummy action `_`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::error::{ParseError, ParseErrorKind};
use crate::game::{validate, Distribution, GameKind, GameModel, JointAction, ModelError, StateId, DUMMY_ACTION};

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

struct Line<'a> {
    number: usize,
    tokens: Vec<Token<'a>>,
}

fn tokenize(text: &str) -> Vec<Line<'_>> {
    text.split('\n')
        .enumerate()
        .map(|(i, raw)| {
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let mut tokens = Vec::new();
            let mut start: Option<(usize, usize)> = None;
            let mut column = 0;
            for (byte, ch) in content.char_indices() {
                column += 1;
                if ch.is_whitespace() {
                    if let Some((b, c)) = start.take() {
                        tokens.push(Token {
                            text: &content[b..byte],
                            column: c,
                        });
                    }
                } else if start.is_none() {
                    start = Some((byte, column));
                }
            }
            if let Some((b, c)) = start {
                tokens.push(Token {
                    text: &content[b..],
                    column: c,
                });
            }
            Line { number: i + 1, tokens }
        })
        .filter(|l| !l.tokens.is_empty())
        .collect()
}

/// Parses a decimal or `p/q` fraction.
pub fn parse_number(text: &str) -> Result<f64, String> {
    if let Some((num, den)) = text.split_once('/') {
        let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
        if !digits(num) || !digits(den) {
            return Err(format!("malformed fraction '{text}'"));
        }
        let (p, q) = match (num.parse::<u64>(), den.parse::<u64>()) {
            (Ok(p), Ok(q)) => (p, q),
            _ => return Err(format!("fraction '{text}' is out of range")),
        };
        if q == 0 {
            return Err(format!("fraction '{text}' has zero denominator"));
        }
        return Ok(p as f64 / q as f64);
    }
    let well_formed = text.bytes().any(|b| b.is_ascii_digit())
        && text
            .bytes()
            .all(|b| b.is_ascii_digit() || matches!(b, b'.' | b'e' | b'E' | b'+' | b'-'));
    match text.parse::<f64>() {
        Ok(v) if well_formed && v.is_finite() => Ok(v),
        _ => Err(format!("malformed number '{text}'")),
    }
}

fn valid_name(text: &str) -> bool {
    !text.is_empty() && !text.contains([',', ':', '"'])
}

struct Parser<'a> {
    errors: Vec<ParseError>,
    lines: Vec<Line<'a>>,
}

impl<'a> Parser<'a> {
    fn error(&mut self, line: usize, column: usize, kind: ParseErrorKind, message: impl Into<String>) {
        self.errors.push(ParseError::new(line, column, kind, message));
    }

    fn syntax(&mut self, line: usize, tok: Option<Token<'_>>, fallback: usize, message: impl Into<String>) {
        let col = tok.map_or(fallback, |t| t.column);
        self.error(line, col, ParseErrorKind::Syntactic, message);
    }

    fn int(&mut self, line: usize, tok: Option<Token<'_>>, end: usize, what: &str) -> Option<usize> {
        match tok {
            None => {
                self.syntax(line, None, end, format!("expected {what}"));
                None
            }
            Some(t) => match t.text.parse::<usize>() {
                Ok(v) if t.text.bytes().all(|b| b.is_ascii_digit()) => Some(v),
                _ => {
                    self.syntax(line, Some(t), end, format!("expected {what}, found '{}'", t.text));
                    None
                }
            },
        }
    }

    fn state(&mut self, line: usize, tok: Option<Token<'_>>, end: usize, states: usize) -> Option<StateId> {
        let s = self.int(line, tok, end, "state index")?;
        if s >= states {
            let col = tok.map_or(end, |t| t.column);
            self.error(
                line,
                col,
                ParseErrorKind::Semantic,
                format!("state {s} is out of range (model has {states} states)"),
            );
            return None;
        }
        Some(s)
    }
}

fn line_end(line: &Line<'_>) -> usize {
    line.tokens.last().map_or(1, |t| t.column + t.text.chars().count())
}

struct Header {
    kind: GameKind,
    players: usize,
    states: usize,
    initial: StateId,
    owner: Option<Vec<usize>>,
    states_line: usize,
}

/// Parses raw bytes, reporting invalid UTF-8 as a lexical error.
pub fn parse_game_bytes(bytes: &[u8]) -> Result<GameModel, Vec<ParseError>> {
    match std::str::from_utf8(bytes) {
        Ok(text) => parse_game(text),
        Err(e) => {
            let prefix = &bytes[..e.valid_up_to()];
            let line = prefix.iter().filter(|&&b| b == b'\n').count() + 1;
            let line_start = prefix.iter().rposition(|&b| b == b'\n').map_or(0, |p| p + 1);
            let column = String::from_utf8_lossy(&prefix[line_start..]).chars().count() + 1;
            Err(vec![ParseError::new(
                line,
                column,
                ParseErrorKind::Lexical,
                "input is not valid UTF-8",
            )])
        }
    }
}

/// Parses a game model. On failure every diagnostic found is returned.
pub fn parse_game(text: &str) -> Result<GameModel, Vec<ParseError>> {
    let mut p = Parser {
        errors: Vec::new(),
        lines: tokenize(text),
    };
    let header = parse_header(&mut p);
    let Some(header) = header else {
        return Err(p.errors);
    };
    let (actions, action_lines) = parse_actions(&mut p, &header);
    let body = parse_body(&mut p, &header, &actions);
    if !p.errors.is_empty() {
        return Err(p.errors);
    }
    let (transitions, labels, rewards) = body;
    let model = GameModel {
        kind: header.kind,
        players: header.players,
        states: header.states,
        initial: header.initial,
        owner: header.owner,
        actions,
        transitions,
        labels,
        rewards,
    };
    if let Err(errs) = validate(&model) {
        for e in errs {
            let line = match &e {
                ModelError::MissingTransition { state, .. } => {
                    action_lines.get(state).copied().unwrap_or(header.states_line)
                }
                _ => header.states_line,
            };
            p.error(line, 1, ParseErrorKind::Semantic, e.to_string());
        }
        return Err(p.errors);
    }
    Ok(model)
}

fn parse_header(p: &mut Parser<'_>) -> Option<Header> {
    let mut kind: Option<GameKind> = None;
    let mut players: Option<usize> = None;
    let mut states: Option<(usize, usize)> = None;
    let mut init: Option<(usize, usize, usize)> = None;
    let mut owner_line: Option<usize> = None;
    let mut seen: BTreeMap<&str, usize> = BTreeMap::new();

    for li in 0..p.lines.len() {
        let line = &p.lines[li];
        let number = line.number;
        let end = line_end(line);
        let toks = line.tokens.clone();
        let directive = toks[0];
        let known_header = matches!(directive.text, "game" | "players" | "states" | "init" | "owner");
        if known_header {
            if let Some(prev) = seen.insert(directive.text, number) {
                p.error(
                    number,
                    directive.column,
                    ParseErrorKind::Semantic,
                    format!("duplicate '{}' directive (first on line {prev})", directive.text),
                );
                continue;
            }
        }
        match directive.text {
            "game" => {
                match toks.get(1).map(|t| t.text) {
                    Some("tsg") => kind = Some(GameKind::Tsg),
                    Some("csg") => kind = Some(GameKind::Csg),
                    _ => p.syntax(number, toks.get(1).copied(), end, "expected 'tsg' or 'csg'"),
                }
                if let Some(t) = toks.get(2) {
                    p.syntax(number, Some(*t), end, "unexpected token after game kind");
                }
            }
            "players" | "states" => {
                let what = if directive.text == "players" {
                    "player count"
                } else {
                    "state count"
                };
                if let Some(v) = p.int(number, toks.get(1).copied(), end, what) {
                    if v == 0 {
                        p.error(
                            number,
                            toks[1].column,
                            ParseErrorKind::Semantic,
                            format!("{what} must be at least 1"),
                        );
                    } else if directive.text == "players" {
                        players = Some(v);
                    } else {
                        states = Some((v, number));
                    }
                }
                if let Some(t) = toks.get(2) {
                    p.syntax(number, Some(*t), end, "unexpected token");
                }
            }
            "init" => {
                if let Some(v) = p.int(number, toks.get(1).copied(), end, "initial state") {
                    init = Some((v, number, toks[1].column));
                }
                if let Some(t) = toks.get(2) {
                    p.syntax(number, Some(*t), end, "unexpected token");
                }
            }
            "owner" => owner_line = Some(li),
            "actions" | "t" | "label" | "reward" => {}
            other => p.error(
                number,
                directive.column,
                ParseErrorKind::Syntactic,
                format!("unknown directive '{other}'"),
            ),
        }
    }

    for (name, present) in [
        ("game", kind.is_some() || seen.contains_key("game")),
        ("players", players.is_some() || seen.contains_key("players")),
        ("states", states.is_some() || seen.contains_key("states")),
        ("init", init.is_some() || seen.contains_key("init")),
    ] {
        if !present {
            p.error(1, 1, ParseErrorKind::Syntactic, format!("missing '{name}' directive"));
        }
    }
    let (kind, players, (states, states_line), init) = (kind?, players?, states?, init?);
    let mut ok = true;
    if init.0 >= states {
        p.error(
            init.1,
            init.2,
            ParseErrorKind::Semantic,
            format!("initial state {} is out of range (model has {states} states)", init.0),
        );
        ok = false;
    }
    let mut owner = None;
    match (kind, owner_line) {
        (GameKind::Tsg, None) => {
            p.error(
                1,
                1,
                ParseErrorKind::Syntactic,
                "turn-based game requires an 'owner' directive",
            );
            ok = false;
        }
        (GameKind::Csg, Some(li)) => {
            let line = &p.lines[li];
            let (n, c) = (line.number, line.tokens[0].column);
            p.error(
                n,
                c,
                ParseErrorKind::Semantic,
                "'owner' is only allowed in turn-based games",
            );
            ok = false;
        }
        (GameKind::Tsg, Some(li)) => {
            let number = p.lines[li].number;
            let end = line_end(&p.lines[li]);
            let toks = p.lines[li].tokens.clone();
            let mut vec = Vec::new();
            for t in &toks[1..] {
                match p.int(number, Some(*t), end, "player id") {
                    Some(v) if (1..=players).contains(&v) => vec.push(v),
                    Some(v) => {
                        p.error(
                            number,
                            t.column,
                            ParseErrorKind::Semantic,
                            format!("owner {v} is out of range (model has {players} players)"),
                        );
                        ok = false;
                    }
                    None => ok = false,
                }
            }
            if vec.len() != states && ok {
                p.error(
                    number,
                    toks[0].column,
                    ParseErrorKind::Semantic,
                    format!("owner lists {} states, expected {states}", vec.len()),
                );
                ok = false;
            }
            owner = Some(vec);
        }
        (GameKind::Csg, None) => {}
    }
    if !ok {
        return None;
    }
    Some(Header {
        kind,
        players,
        states,
        initial: init.0,
        owner,
        states_line,
    })
}

type ActionTable = Vec<Vec<Vec<String>>>;

fn parse_actions(p: &mut Parser<'_>, h: &Header) -> (ActionTable, BTreeMap<StateId, usize>) {
    let mut table: Vec<Vec<Option<Vec<String>>>> = vec![vec![None; h.states]; h.players];
    let mut first_line: BTreeMap<StateId, usize> = BTreeMap::new();
    for li in 0..p.lines.len() {
        if p.lines[li].tokens[0].text != "actions" {
            continue;
        }
        let number = p.lines[li].number;
        let end = line_end(&p.lines[li]);
        let toks = p.lines[li].tokens.clone();
        let Some(player) = p.int(number, toks.get(1).copied(), end, "player id") else {
            continue;
        };
        if player == 0 || player > h.players {
            p.error(
                number,
                toks[1].column,
                ParseErrorKind::Semantic,
                format!("player {player} is out of range (model has {} players)", h.players),
            );
            continue;
        }
        let Some(state) = p.state(number, toks.get(2).copied(), end, h.states) else {
            continue;
        };
        if let Some(owner) = &h.owner {
            if owner[state] != player {
                p.error(
                    number,
                    toks[1].column,
                    ParseErrorKind::Semantic,
                    format!("player {player} does not own state {state}"),
                );
                continue;
            }
        }
        if toks.len() < 4 {
            p.syntax(number, None, end, "expected at least one action label");
            continue;
        }
        let mut labels = Vec::new();
        let mut ok = true;
        for t in &toks[3..] {
            if !valid_name(t.text) {
                p.syntax(number, Some(*t), end, format!("invalid action label '{}'", t.text));
                ok = false;
            } else if labels.iter().any(|l: &String| l == t.text) {
                p.error(
                    number,
                    t.column,
                    ParseErrorKind::Semantic,
                    format!("duplicate action label '{}'", t.text),
                );
                ok = false;
            } else {
                labels.push(t.text.to_string());
            }
        }
        if !ok {
            continue;
        }
        if table[player - 1][state].is_some() {
            p.error(
                number,
                toks[0].column,
                ParseErrorKind::Semantic,
                format!("actions for player {player} in state {state} declared twice"),
            );
            continue;
        }
        table[player - 1][state] = Some(labels);
        first_line.entry(state).or_insert(number);
    }

    let mut actions: ActionTable = vec![vec![Vec::new(); h.states]; h.players];
    for (pl, per_state) in table.into_iter().enumerate() {
        for (s, entry) in per_state.into_iter().enumerate() {
            let owned_by_other = h.owner.as_ref().is_some_and(|o| o[s] != pl + 1);
            match entry {
                Some(labels) => actions[pl][s] = labels,
                None if owned_by_other => actions[pl][s] = vec![DUMMY_ACTION.to_string()],
                None => p.error(
                    h.states_line,
                    1,
                    ParseErrorKind::Semantic,
                    format!("no actions declared for player {} in state {s}", pl + 1),
                ),
            }
        }
    }
    (actions, first_line)
}

type Body = (
    BTreeMap<(StateId, JointAction), Distribution>,
    BTreeMap<String, BTreeSet<StateId>>,
    BTreeMap<String, BTreeMap<(StateId, JointAction), f64>>,
);

fn resolve_joint(
    p: &mut Parser<'_>,
    h: &Header,
    actions: &ActionTable,
    number: usize,
    tok: Token<'_>,
    state: StateId,
) -> Option<JointAction> {
    let parts: Vec<&str> = tok.text.split(',').collect();
    let mut joint = vec![0; h.players];
    let players: Vec<usize> = match &h.owner {
        Some(owner) => vec![owner[state]],
        None => (1..=h.players).collect(),
    };
    if parts.len() != players.len() {
        p.error(
            number,
            tok.column,
            ParseErrorKind::Semantic,
            format!(
                "joint action '{}' has {} components, expected {}",
                tok.text,
                parts.len(),
                players.len()
            ),
        );
        return None;
    }
    let mut ok = true;
    for (&player, part) in players.iter().zip(&parts) {
        let declared = &actions[player - 1][state];
        if declared.is_empty() {
            // already reported as a missing declaration
            ok = false;
            continue;
        }
        match declared.iter().position(|l| l == part) {
            Some(i) => joint[player - 1] = i,
            None => {
                p.error(
                    number,
                    tok.column,
                    ParseErrorKind::Semantic,
                    format!("undeclared action '{part}' for player {player} in state {state}"),
                );
                ok = false;
            }
        }
    }
    ok.then_some(joint)
}

fn parse_body(p: &mut Parser<'_>, h: &Header, actions: &ActionTable) -> Body {
    let mut transitions = BTreeMap::new();
    let mut transition_lines: BTreeMap<(StateId, JointAction), usize> = BTreeMap::new();
    let mut labels: BTreeMap<String, BTreeSet<StateId>> = BTreeMap::new();
    let mut rewards: BTreeMap<String, BTreeMap<(StateId, JointAction), f64>> = BTreeMap::new();

    for li in 0..p.lines.len() {
        let number = p.lines[li].number;
        let end = line_end(&p.lines[li]);
        let toks = p.lines[li].tokens.clone();
        match toks[0].text {
            "t" => {
                let Some(state) = p.state(number, toks.get(1).copied(), end, h.states) else {
                    continue;
                };
                let Some(jt) = toks.get(2).copied() else {
                    p.syntax(number, None, end, "expected joint action");
                    continue;
                };
                let joint = resolve_joint(p, h, actions, number, jt, state);
                match toks.get(3) {
                    Some(t) if t.text == ":" => {}
                    other => {
                        p.syntax(number, other.copied(), end, "expected ':'");
                        continue;
                    }
                }
                let rest = &toks[4..];
                if rest.is_empty() || !rest.len().is_multiple_of(2) {
                    p.syntax(
                        number,
                        rest.last().copied(),
                        end,
                        "expected one or more '<prob> <state>' pairs",
                    );
                    continue;
                }
                let mut entries = Vec::new();
                let mut ok = true;
                for pair in rest.chunks(2) {
                    let prob = match parse_number(pair[0].text) {
                        Ok(v) if v > 0.0 && v <= 1.0 => Some(v),
                        Ok(v) => {
                            p.error(
                                number,
                                pair[0].column,
                                ParseErrorKind::Semantic,
                                format!("probability {v} is outside (0,1]"),
                            );
                            None
                        }
                        Err(msg) => {
                            p.error(number, pair[0].column, ParseErrorKind::Lexical, msg);
                            None
                        }
                    };
                    let target = p.state(number, Some(pair[1]), end, h.states);
                    match (prob, target) {
                        (Some(pr), Some(t)) => {
                            if entries.iter().any(|&(s, _)| s == t) {
                                p.error(
                                    number,
                                    pair[1].column,
                                    ParseErrorKind::Semantic,
                                    format!("successor {t} listed twice"),
                                );
                                ok = false;
                            }
                            entries.push((t, pr));
                        }
                        _ => ok = false,
                    }
                }
                let Some(joint) = joint else { continue };
                if !ok {
                    continue;
                }
                let dist = Distribution::new(entries);
                let sum = dist.sum();
                if (sum - 1.0).abs() > SUM_TOLERANCE {
                    p.error(
                        number,
                        toks[0].column,
                        ParseErrorKind::Semantic,
                        format!("distribution sums to {sum}"),
                    );
                    continue;
                }
                let key = (state, joint);
                if let Some(prev) = transition_lines.get(&key) {
                    p.error(
                        number,
                        jt.column,
                        ParseErrorKind::Semantic,
                        format!(
                            "duplicate transition for state {state}, action '{}' (first on line {prev})",
                            jt.text
                        ),
                    );
                    continue;
                }
                transition_lines.insert(key.clone(), number);
                transitions.insert(key, dist);
            }
            "label" => {
                let Some(name) = toks.get(1) else {
                    p.syntax(number, None, end, "expected label name");
                    continue;
                };
                if !valid_name(name.text) {
                    p.syntax(number, Some(*name), end, format!("invalid label name '{}'", name.text));
                    continue;
                }
                let mut set = BTreeSet::new();
                for t in &toks[2..] {
                    if let Some(s) = p.state(number, Some(*t), end, h.states) {
                        set.insert(s);
                    }
                }
                labels.entry(name.text.to_string()).or_default().extend(set);
            }
            "reward" => {
                let Some(name) = toks.get(1).copied() else {
                    p.syntax(number, None, end, "expected reward name");
                    continue;
                };
                if !valid_name(name.text) {
                    p.syntax(number, Some(name), end, format!("invalid reward name '{}'", name.text));
                    continue;
                }
                let Some(state) = p.state(number, toks.get(2).copied(), end, h.states) else {
                    continue;
                };
                let Some(jt) = toks.get(3).copied() else {
                    p.syntax(number, None, end, "expected joint action");
                    continue;
                };
                let joint = resolve_joint(p, h, actions, number, jt, state);
                let value = match toks.get(4) {
                    None => {
                        p.syntax(number, None, end, "expected reward value");
                        None
                    }
                    Some(t) => match parse_number(t.text) {
                        Ok(v) if v >= 0.0 => Some(v),
                        Ok(v) => {
                            p.error(
                                number,
                                t.column,
                                ParseErrorKind::Semantic,
                                format!("reward {v} is negative"),
                            );
                            None
                        }
                        Err(msg) => {
                            p.error(number, t.column, ParseErrorKind::Lexical, msg);
                            None
                        }
                    },
                };
                if let Some(t) = toks.get(5) {
                    p.syntax(number, Some(*t), end, "unexpected token after reward value");
                    continue;
                }
                let (Some(joint), Some(value)) = (joint, value) else {
                    continue;
                };
                let table = rewards.entry(name.text.to_string()).or_default();
                if table.insert((state, joint), value).is_some() {
                    p.error(
                        number,
                        jt.column,
                        ParseErrorKind::Semantic,
                        format!(
                            "duplicate reward '{}' for state {state}, action '{}'",
                            name.text, jt.text
                        ),
                    );
                }
            }
            _ => {}
        }
    }
    (transitions, labels, rewards)
}

/// Text produced by [`serialize_game`] plus any lossy-output warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct SerializedGame {
    pub text: String,
    pub warnings: Vec<String>,
}

/// Writes a valid model in `.sgm` form. Probabilities are written with the
/// shortest decimal that reads back to the same `f64`.
pub fn serialize_game(model: &GameModel) -> SerializedGame {
    let mut out = String::new();
    let mut warnings = Vec::new();
    let _ = writeln!(out, "game {}", model.kind);
    let _ = writeln!(out, "players {}", model.players);
    let _ = writeln!(out, "states {}", model.states);
    let _ = writeln!(out, "init {}", model.initial);
    let owner = match model.kind {
        GameKind::Tsg => model.owner.as_ref(),
        GameKind::Csg => None,
    };
    if let Some(owner) = owner {
        let list: Vec<String> = owner.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "owner {}", list.join(" "));
    }
    for s in 0..model.states {
        for p in 1..=model.players {
            if owner.is_some_and(|o| o[s] != p) {
                continue;
            }
            let _ = writeln!(out, "actions {p} {s} {}", model.actions[p - 1][s].join(" "));
        }
    }
    for ((s, joint), dist) in &model.transitions {
        let _ = write!(out, "t {s} {} :", model.joint_label(*s, joint));
        for (t, pr) in dist.iter() {
            let _ = write!(out, " {pr} {t}");
        }
        out.push('\n');
    }
    for (name, states) in &model.labels {
        if states.is_empty() {
            warnings.push(format!("label '{name}' has no states and was omitted"));
            continue;
        }
        let list: Vec<String> = states.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "label {name} {}", list.join(" "));
    }
    for (name, table) in &model.rewards {
        for ((s, joint), v) in table {
            let _ = writeln!(out, "reward {name} {s} {} {v}", model.joint_label(*s, joint));
        }
    }
    SerializedGame { text: out, warnings }
}
