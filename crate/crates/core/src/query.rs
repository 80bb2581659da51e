//! Parser and printer for the supported rPATL fragment.
//!
//! ```text
//! <<P1,P2>> Pmax=? [ F goal ]
//! <<P1>> P>=0.5 [ F<=3 goal ]
//! <<P1>> Rmin=?{"time"} [ F done ]
//! <<P1:P2>> max=? ( P[F goal1] + P[F goal2] ) {ce,sf}
//! ```

use std::fmt::Write as _;

use crate::error::{ParseError, ParseErrorKind};
use crate::game::{CoalitionSpec, PlayerId};
use crate::matrix::Criterion;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Optimum {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbBound {
    Max,
    Min,
    AtLeast(f64),
    AtMost(f64),
}

impl ProbBound {
    /// Direction the coalition optimizes in to decide the bound.
    pub fn optimum(self) -> Optimum {
        match self {
            ProbBound::Max | ProbBound::AtLeast(_) => Optimum::Max,
            ProbBound::Min | ProbBound::AtMost(_) => Optimum::Min,
        }
    }

    pub fn threshold(self) -> Option<f64> {
        match self {
            ProbBound::AtLeast(p) | ProbBound::AtMost(p) => Some(p),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PathFormula {
    Eventually(String),
    BoundedEventually(String, u64),
}

impl PathFormula {
    pub fn target(&self) -> &str {
        match self {
            PathFormula::Eventually(l) | PathFormula::BoundedEventually(l, _) => l,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EquilibriumKind {
    Nash,
    Correlated,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    Probability {
        coalition: CoalitionSpec,
        bound: ProbBound,
        path: PathFormula,
    },
    Reward {
        coalition: CoalitionSpec,
        optimum: Optimum,
        reward: String,
        target: String,
    },
    /// Options absent from the query text are `None`; a criterion is only
    /// ever present together with a kind.
    Equilibrium {
        coalitions: [CoalitionSpec; 2],
        targets: [String; 2],
        kind: Option<EquilibriumKind>,
        criterion: Option<Criterion>,
    },
}

/// Player names used to resolve coalition members, `P1..Pn` by default.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlayerNames(Vec<String>);

impl PlayerNames {
    pub fn new(names: Vec<String>) -> Self {
        PlayerNames(names)
    }

    pub fn numbered(players: usize) -> Self {
        PlayerNames((1..=players).map(|i| format!("P{i}")).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn resolve(&self, name: &str) -> Option<PlayerId> {
        self.0.iter().position(|n| n == name).map(|i| i + 1)
    }

    pub fn name(&self, id: PlayerId) -> &str {
        &self.0[id - 1]
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Open,  // <<
    Close, // >>
    Colon,
    Comma,
    LBrack,
    RBrack,
    LParen,
    RParen,
    LBrace,
    RBrace,
    Plus,
    Query, // =?
    Ge,
    Le,
    Ident(String),
    Number(String),
    Str(String),
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Open => "'<<'".into(),
            Tok::Close => "'>>'".into(),
            Tok::Colon => "':'".into(),
            Tok::Comma => "','".into(),
            Tok::LBrack => "'['".into(),
            Tok::RBrack => "']'".into(),
            Tok::LParen => "'('".into(),
            Tok::RParen => "')'".into(),
            Tok::LBrace => "'{'".into(),
            Tok::RBrace => "'}'".into(),
            Tok::Plus => "'+'".into(),
            Tok::Query => "'=?'".into(),
            Tok::Ge => "'>='".into(),
            Tok::Le => "'<='".into(),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Number(s) => format!("number '{s}'"),
            Tok::Str(s) => format!("\"{s}\""),
        }
    }
}

struct Lexed {
    tok: Tok,
    column: usize,
}

fn lex(text: &str, line: usize) -> Result<Vec<Lexed>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let err = |col: usize, msg: String| ParseError::new(line, col, ParseErrorKind::Lexical, msg);
    while i < chars.len() {
        let c = chars[i];
        let column = i + 1;
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let next = chars.get(i + 1).copied();
        let (tok, len) = match (c, next) {
            ('<', Some('<')) => (Tok::Open, 2),
            ('>', Some('>')) => (Tok::Close, 2),
            ('>', Some('=')) => (Tok::Ge, 2),
            ('<', Some('=')) => (Tok::Le, 2),
            ('=', Some('?')) => (Tok::Query, 2),
            (':', _) => (Tok::Colon, 1),
            (',', _) => (Tok::Comma, 1),
            ('[', _) => (Tok::LBrack, 1),
            (']', _) => (Tok::RBrack, 1),
            ('(', _) => (Tok::LParen, 1),
            (')', _) => (Tok::RParen, 1),
            ('{', _) => (Tok::LBrace, 1),
            ('}', _) => (Tok::RBrace, 1),
            ('+', _) => (Tok::Plus, 1),
            ('"', _) => {
                let Some(len) = chars[i + 1..].iter().position(|&ch| ch == '"') else {
                    return Err(err(column, "unterminated string".into()));
                };
                let s: String = chars[i + 1..i + 1 + len].iter().collect();
                (Tok::Str(s), len + 2)
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let len = chars[i..]
                    .iter()
                    .take_while(|ch| ch.is_ascii_alphanumeric() || **ch == '_')
                    .count();
                (Tok::Ident(chars[i..i + len].iter().collect()), len)
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let mut len = 0;
                while let Some(&ch) = chars.get(i + len) {
                    let exp_sign = (ch == '-' || ch == '+') && len > 0 && matches!(chars[i + len - 1], 'e' | 'E');
                    if ch.is_ascii_digit() || ch == '.' || ch == 'e' || ch == 'E' || exp_sign {
                        len += 1;
                    } else {
                        break;
                    }
                }
                (Tok::Number(chars[i..i + len].iter().collect()), len)
            }
            _ => return Err(err(column, format!("unexpected character '{c}'"))),
        };
        out.push(Lexed { tok, column });
        i += len;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Lexed>,
    pos: usize,
    line: usize,
    end_column: usize,
    names: &'a PlayerNames,
}

const UNSUPPORTED_PATH_OPS: [&str; 5] = ["G", "X", "U", "R", "W"];

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|l| &l.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|l| &l.tok)
    }

    fn column(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end_column, |l| l.column)
    }

    fn error(&self, kind: ParseErrorKind, msg: impl Into<String>) -> ParseError {
        ParseError::new(self.line, self.column(), kind, msg)
    }

    fn unexpected(&self, expected: &str) -> ParseError {
        let found = self.peek().map_or("end of input".to_string(), Tok::describe);
        self.error(ParseErrorKind::Syntactic, format!("expected {expected}, found {found}"))
    }

    fn expect(&mut self, tok: Tok) -> Result<(), ParseError> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.unexpected(&tok.describe()))
        }
    }

    fn expect_ident(&mut self, word: &str) -> Result<(), ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) if s == word => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.unexpected(&format!("'{word}'"))),
        }
    }

    fn coalition(&mut self) -> Result<CoalitionSpec, ParseError> {
        let mut members = Vec::new();
        loop {
            let column = self.column();
            let name = match self.peek() {
                Some(Tok::Ident(s)) => s.clone(),
                _ => return Err(self.unexpected("player name")),
            };
            let Some(id) = self.names.resolve(&name) else {
                return Err(self.error(ParseErrorKind::Semantic, format!("unknown player '{name}'")));
            };
            if members.contains(&id) {
                return Err(ParseError::new(
                    self.line,
                    column,
                    ParseErrorKind::Semantic,
                    format!("player '{name}' listed twice"),
                ));
            }
            members.push(id);
            self.pos += 1;
            if self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
            } else {
                return Ok(CoalitionSpec::new(members));
            }
        }
    }

    fn name_token(&mut self, what: &str) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) | Some(Tok::Str(s)) if !s.is_empty() => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    /// Label after `F`; rejects nested operators and other path operators.
    fn target_label(&mut self) -> Result<String, ParseError> {
        let nested = matches!(
            (self.peek(), self.peek_at(1)),
            (Some(Tok::Open | Tok::LParen), _)
                | (
                    Some(Tok::Ident(_)),
                    Some(Tok::Query | Tok::Ge | Tok::Le | Tok::LBrack | Tok::LBrace)
                )
        );
        if nested {
            return Err(self.error(ParseErrorKind::Semantic, "nested path formulas are not supported"));
        }
        let label = self.name_token("target label")?;
        if let Some(Tok::Ident(op)) = self.peek() {
            if UNSUPPORTED_PATH_OPS.contains(&op.as_str()) {
                return Err(self.error(
                    ParseErrorKind::Semantic,
                    format!("path operator '{op}' is not supported"),
                ));
            }
        }
        Ok(label)
    }

    fn number(&mut self, what: &str) -> Result<(String, usize), ParseError> {
        match self.peek() {
            Some(Tok::Number(s)) => {
                let out = (s.clone(), self.column());
                self.pos += 1;
                Ok(out)
            }
            _ => Err(self.unexpected(what)),
        }
    }

    fn path(&mut self) -> Result<PathFormula, ParseError> {
        self.expect(Tok::LBrack)?;
        if let (Some(Tok::Ident(_)), Some(Tok::Ident(op))) = (self.peek(), self.peek_at(1)) {
            if UNSUPPORTED_PATH_OPS.contains(&op.as_str()) {
                let op = op.clone();
                self.pos += 1;
                return Err(self.error(
                    ParseErrorKind::Semantic,
                    format!("path operator '{op}' is not supported"),
                ));
            }
        }
        match self.peek() {
            Some(Tok::Ident(s)) if s == "F" => self.pos += 1,
            Some(Tok::Ident(s)) if UNSUPPORTED_PATH_OPS.contains(&s.as_str()) => {
                return Err(self.error(
                    ParseErrorKind::Semantic,
                    format!("path operator '{s}' is not supported"),
                ));
            }
            _ => return Err(self.unexpected("'F'")),
        }
        let path = if self.peek() == Some(&Tok::Le) {
            self.pos += 1;
            let (text, col) = self.number("step bound")?;
            let k = text.parse::<u64>().map_err(|_| {
                ParseError::new(
                    self.line,
                    col,
                    ParseErrorKind::Syntactic,
                    format!("malformed step bound '{text}': expected a nonnegative integer"),
                )
            })?;
            PathFormula::BoundedEventually(self.target_label()?, k)
        } else {
            PathFormula::Eventually(self.target_label()?)
        };
        self.expect(Tok::RBrack)?;
        Ok(path)
    }

    fn probability_bound(&mut self) -> Result<f64, ParseError> {
        let (text, col) = self.number("probability bound")?;
        match text.parse::<f64>() {
            Ok(p) if (0.0..=1.0).contains(&p) => Ok(p),
            Ok(_) => Err(ParseError::new(
                self.line,
                col,
                ParseErrorKind::Semantic,
                format!("probability bound {text} is outside [0,1]"),
            )),
            Err(_) => Err(ParseError::new(
                self.line,
                col,
                ParseErrorKind::Syntactic,
                format!("malformed bound '{text}'"),
            )),
        }
    }

    fn zero_sum(&mut self, coalition: CoalitionSpec) -> Result<Query, ParseError> {
        let head = match self.peek() {
            Some(Tok::Ident(s)) => s.clone(),
            _ => return Err(self.unexpected("'P' or 'R' operator")),
        };
        self.pos += 1;
        match head.as_str() {
            "Pmax" | "Pmin" => {
                self.expect(Tok::Query)?;
                let bound = if head == "Pmax" { ProbBound::Max } else { ProbBound::Min };
                Ok(Query::Probability {
                    coalition,
                    bound,
                    path: self.path()?,
                })
            }
            "P" => {
                let bound = match self.peek() {
                    Some(Tok::Ge) => {
                        self.pos += 1;
                        ProbBound::AtLeast(self.probability_bound()?)
                    }
                    Some(Tok::Le) => {
                        self.pos += 1;
                        ProbBound::AtMost(self.probability_bound()?)
                    }
                    _ => return Err(self.unexpected("'>=' or '<='")),
                };
                Ok(Query::Probability {
                    coalition,
                    bound,
                    path: self.path()?,
                })
            }
            "Rmax" | "Rmin" => {
                self.expect(Tok::Query)?;
                self.expect(Tok::LBrace)?;
                let reward = self.name_token("reward name")?;
                self.expect(Tok::RBrace)?;
                let path = self.path()?;
                let target = match path {
                    PathFormula::Eventually(l) => l,
                    PathFormula::BoundedEventually(..) => {
                        return Err(self.error(
                            ParseErrorKind::Semantic,
                            "step-bounded reward queries are not supported",
                        ))
                    }
                };
                let optimum = if head == "Rmax" { Optimum::Max } else { Optimum::Min };
                Ok(Query::Reward {
                    coalition,
                    optimum,
                    reward,
                    target,
                })
            }
            _ => {
                self.pos -= 1;
                Err(self.unexpected("'Pmax=?', 'Pmin=?', 'P>=', 'P<=', 'Rmax=?' or 'Rmin=?'"))
            }
        }
    }

    fn objective(&mut self) -> Result<String, ParseError> {
        self.expect_ident("P")?;
        self.expect(Tok::LBrack)?;
        self.expect_ident("F")?;
        if self.peek() == Some(&Tok::Le) {
            return Err(self.error(
                ParseErrorKind::Semantic,
                "step-bounded equilibrium objectives are not supported",
            ));
        }
        let label = self.target_label()?;
        self.expect(Tok::RBrack)?;
        Ok(label)
    }

    fn equilibrium(&mut self, first: CoalitionSpec, second: CoalitionSpec, start: usize) -> Result<Query, ParseError> {
        let mut seen = vec![false; self.names.len()];
        for p in first.members().chain(second.members()) {
            if std::mem::replace(&mut seen[p - 1], true) {
                return Err(ParseError::new(
                    self.line,
                    start,
                    ParseErrorKind::Semantic,
                    format!("player '{}' appears in both coalitions", self.names.name(p)),
                ));
            }
        }
        if let Some(p) = seen.iter().position(|s| !s) {
            return Err(ParseError::new(
                self.line,
                start,
                ParseErrorKind::Semantic,
                format!("player '{}' is in neither coalition", self.names.name(p + 1)),
            ));
        }
        self.expect_ident("max")?;
        self.expect(Tok::Query)?;
        self.expect(Tok::LParen)?;
        let t1 = self.objective()?;
        self.expect(Tok::Plus)?;
        let t2 = self.objective()?;
        self.expect(Tok::RParen)?;
        let (mut kind, mut criterion) = (None, None);
        if self.peek() == Some(&Tok::LBrace) {
            self.pos += 1;
            kind = Some(match self.peek() {
                Some(Tok::Ident(s)) if s == "ne" => EquilibriumKind::Nash,
                Some(Tok::Ident(s)) if s == "ce" => EquilibriumKind::Correlated,
                _ => return Err(self.unexpected("'ne' or 'ce'")),
            });
            self.pos += 1;
            if self.peek() == Some(&Tok::Comma) {
                self.pos += 1;
                criterion = Some(match self.peek() {
                    Some(Tok::Ident(s)) if s == "sw" => Criterion::SocialWelfare,
                    Some(Tok::Ident(s)) if s == "sf" => Criterion::SocialFairness,
                    _ => return Err(self.unexpected("'sw' or 'sf'")),
                });
                self.pos += 1;
            }
            self.expect(Tok::RBrace)?;
        }
        Ok(Query::Equilibrium {
            coalitions: [first, second],
            targets: [t1, t2],
            kind,
            criterion,
        })
    }

    fn query(&mut self) -> Result<Query, ParseError> {
        let start = self.column();
        self.expect(Tok::Open)?;
        let first = self.coalition()?;
        let q = match self.peek() {
            Some(Tok::Close) => {
                self.pos += 1;
                self.zero_sum(first)?
            }
            Some(Tok::Colon) => {
                self.pos += 1;
                let second = self.coalition()?;
                self.expect(Tok::Close)?;
                self.equilibrium(first, second, start)?
            }
            _ => return Err(self.unexpected("'>>' or ':'")),
        };
        if self.peek().is_some() {
            return Err(self.unexpected("end of query"));
        }
        Ok(q)
    }
}

fn parse_query_line(text: &str, line: usize, names: &PlayerNames) -> Result<Query, Vec<ParseError>> {
    let toks = lex(text, line).map_err(|e| vec![e])?;
    let mut parser = Parser {
        toks,
        pos: 0,
        line,
        end_column: text.chars().count() + 1,
        names,
    };
    parser.query().map_err(|e| vec![e])
}

/// Parses one query, resolving player names through `names`.
pub fn parse_query(text: &str, names: &PlayerNames) -> Result<Query, Vec<ParseError>> {
    if text.contains('\n') {
        let n = text.lines().filter(|l| !l.trim().is_empty()).count();
        if n > 1 {
            return Err(vec![ParseError::new(
                1,
                1,
                ParseErrorKind::Syntactic,
                "expected a single query",
            )]);
        }
    }
    let line = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    parse_query_line(line, 1, names)
}

/// A query read from a `.props` file together with its source line.
#[derive(Debug, Clone, PartialEq)]
pub struct PropsEntry {
    pub line: usize,
    pub text: String,
    pub query: Query,
}

/// Parses a `.props` file: one query per line, blank lines and `#`
/// comments ignored. Errors of every line are collected.
pub fn parse_props(text: &str, names: &PlayerNames) -> Result<Vec<PropsEntry>, Vec<ParseError>> {
    let mut entries = Vec::new();
    let mut errors = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        if content.trim().is_empty() {
            continue;
        }
        match parse_query_line(content, i + 1, names) {
            Ok(query) => entries.push(PropsEntry {
                line: i + 1,
                text: content.trim().to_string(),
                query,
            }),
            Err(e) => errors.extend(e),
        }
    }
    if errors.is_empty() {
        Ok(entries)
    } else {
        Err(errors)
    }
}

fn is_plain_label(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !UNSUPPORTED_PATH_OPS.contains(&s)
        && s != "F"
}

fn label_text(s: &str) -> String {
    if is_plain_label(s) {
        s.to_string()
    } else {
        format!("\"{s}\"")
    }
}

fn coalition_text(c: &CoalitionSpec, names: &PlayerNames) -> String {
    c.members().map(|p| names.name(p)).collect::<Vec<_>>().join(",")
}

/// Renders a query in the concrete syntax accepted by [`parse_query`].
pub fn print_query(q: &Query, names: &PlayerNames) -> String {
    let mut out = String::new();
    match q {
        Query::Probability { coalition, bound, path } => {
            let op = match bound {
                ProbBound::Max => "Pmax=?".to_string(),
                ProbBound::Min => "Pmin=?".to_string(),
                ProbBound::AtLeast(p) => format!("P>={p}"),
                ProbBound::AtMost(p) => format!("P<={p}"),
            };
            let f = match path {
                PathFormula::Eventually(l) => format!("F {}", label_text(l)),
                PathFormula::BoundedEventually(l, k) => format!("F<={k} {}", label_text(l)),
            };
            let _ = write!(out, "<<{}>> {op} [ {f} ]", coalition_text(coalition, names));
        }
        Query::Reward {
            coalition,
            optimum,
            reward,
            target,
        } => {
            let op = match optimum {
                Optimum::Max => "Rmax",
                Optimum::Min => "Rmin",
            };
            let _ = write!(
                out,
                "<<{}>> {op}=?{{\"{reward}\"}} [ F {} ]",
                coalition_text(coalition, names),
                label_text(target)
            );
        }
        Query::Equilibrium {
            coalitions,
            targets,
            kind,
            criterion,
        } => {
            let _ = write!(
                out,
                "<<{}:{}>> max=? ( P[F {}] + P[F {}] )",
                coalition_text(&coalitions[0], names),
                coalition_text(&coalitions[1], names),
                label_text(&targets[0]),
                label_text(&targets[1])
            );
            if let Some(kind) = kind {
                let k = match kind {
                    EquilibriumKind::Nash => "ne",
                    EquilibriumKind::Correlated => "ce",
                };
                match criterion {
                    Some(Criterion::SocialWelfare) => {
                        let _ = write!(out, " {{{k},sw}}");
                    }
                    Some(Criterion::SocialFairness) => {
                        let _ = write!(out, " {{{k},sf}}");
                    }
                    None => {
                        let _ = write!(out, " {{{k}}}");
                    }
                }
            }
        }
    }
    out
}
