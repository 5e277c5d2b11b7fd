//! Line-oriented lexer and recursive-descent parser for spec files.

use num_rational::Ratio;
use thiserror::Error;

use crate::expr::{ClockExpr, DefSet};
use crate::relations::{parse_ratio, ProbRelation, Probability, RelationKind};
use crate::trace::ClockId;

use super::{
    default_probability, CmpOp, ConstraintItem, ConstraintTemplate, ExtremumMode, IntervalMethod,
    MonitorRef, NamedConstraint, NamedQuery, Pred, PredMode, Query, SpecFile, StateExpr,
};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("syntax error at {line}:{col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },
    #[error("bad parameter at line {line}: {msg}")]
    BadParameter { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Number(String),
    Colon,
    Comma,
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Slash,
    Plus,
    Minus,
    Equals,
    AndAnd,
    OrOr,
    Bang,
    Le,
    Lt,
    Ge,
    Gt,
    EqEq,
    Ne,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Ident(s) => format!("`{s}`"),
            Tok::Number(s) => format!("number `{s}`"),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Slash => "`/`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
            Tok::Equals => "`=`".into(),
            Tok::AndAnd => "`&&`".into(),
            Tok::OrOr => "`||`".into(),
            Tok::Bang => "`!`".into(),
            Tok::Le => "`<=`".into(),
            Tok::Lt => "`<`".into(),
            Tok::Ge => "`>=`".into(),
            Tok::Gt => "`>`".into(),
            Tok::EqEq => "`==`".into(),
            Tok::Ne => "`!=`".into(),
        }
    }
}

fn lex(line: &str, lineno: usize) -> Result<Vec<(Tok, usize)>, SpecError> {
    let bytes = line.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let col = i + 1;
        let b = bytes[i];
        match b {
            b' ' | b'\t' | b'\r' => i += 1,
            b'#' => break,
            b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                toks.push((Tok::Ident(line[start..i].to_owned()), col));
            }
            b'0'..=b'9' => {
                let start = i;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                    i += 1;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
                toks.push((Tok::Number(line[start..i].to_owned()), col));
            }
            _ => {
                let two = if i + 1 < bytes.len() {
                    &line[i..i + 2]
                } else {
                    ""
                };
                let (tok, len) = match two {
                    "&&" => (Tok::AndAnd, 2),
                    "||" => (Tok::OrOr, 2),
                    "<=" => (Tok::Le, 2),
                    ">=" => (Tok::Ge, 2),
                    "==" => (Tok::EqEq, 2),
                    "!=" => (Tok::Ne, 2),
                    _ => match b {
                        b':' => (Tok::Colon, 1),
                        b',' => (Tok::Comma, 1),
                        b'(' => (Tok::LParen, 1),
                        b')' => (Tok::RParen, 1),
                        b'{' => (Tok::LBrace, 1),
                        b'}' => (Tok::RBrace, 1),
                        b'[' => (Tok::LBracket, 1),
                        b']' => (Tok::RBracket, 1),
                        b'/' => (Tok::Slash, 1),
                        b'+' => (Tok::Plus, 1),
                        b'-' => (Tok::Minus, 1),
                        b'=' => (Tok::Equals, 1),
                        b'<' => (Tok::Lt, 1),
                        b'>' => (Tok::Gt, 1),
                        b'!' => (Tok::Bang, 1),
                        other => {
                            return Err(SpecError::Syntax {
                                line: lineno,
                                col,
                                msg: format!("unexpected character `{}`", other as char),
                            })
                        }
                    },
                };
                toks.push((tok, col));
                i += len;
            }
        }
    }
    Ok(toks)
}

const TEMPLATE_KEYWORDS: [&str; 7] = [
    "periodic",
    "execution",
    "sporadic",
    "synchronization",
    "e2e",
    "comparison",
    "exclusion",
];

const RELATION_KEYWORDS: [(&str, RelationKind); 5] = [
    ("subclock", RelationKind::Subclock),
    ("coincides", RelationKind::Coincidence),
    ("excludes", RelationKind::Exclusion),
    ("causes", RelationKind::Causality),
    ("precedes", RelationKind::Precedence),
];

struct LineParser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    line: usize,
    end_col: usize,
}

impl LineParser {
    fn new(toks: Vec<(Tok, usize)>, line: usize, line_len: usize) -> Self {
        LineParser {
            toks,
            pos: 0,
            line,
            end_col: line_len + 1,
        }
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, SpecError> {
        let col = self
            .toks
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or(self.end_col);
        Err(SpecError::Syntax {
            line: self.line,
            col,
            msg: msg.into(),
        })
    }

    fn bad_param<T>(&self, msg: impl Into<String>) -> Result<T, SpecError> {
        Err(SpecError::BadParameter {
            line: self.line,
            msg: msg.into(),
        })
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.toks.get(self.pos + offset).map(|(t, _)| t)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t.clone());
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == Some(tok) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, tok: Tok) -> Result<(), SpecError> {
        if self.eat(&tok) {
            Ok(())
        } else {
            match self.peek() {
                Some(found) => {
                    let found = found.describe();
                    self.err(format!("expected {}, found {found}", tok.describe()))
                }
                None => self.err(format!("expected {} at end of line", tok.describe())),
            }
        }
    }

    fn peek_keyword(&self, word: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == word)
    }

    fn eat_keyword(&mut self, word: &str) -> bool {
        if self.peek_keyword(word) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect_keyword(&mut self, word: &str) -> Result<(), SpecError> {
        if self.eat_keyword(word) {
            Ok(())
        } else {
            match self.peek() {
                Some(found) => {
                    let found = found.describe();
                    self.err(format!("expected `{word}`, found {found}"))
                }
                None => self.err(format!("expected `{word}` at end of line")),
            }
        }
    }

    fn ident(&mut self) -> Result<String, SpecError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            Some(found) => {
                let found = found.describe();
                self.err(format!("expected identifier, found {found}"))
            }
            None => self.err("expected identifier at end of line"),
        }
    }

    fn clock_name(&mut self) -> Result<ClockId, SpecError> {
        Ok(ClockId::new(self.ident()?))
    }

    fn integer(&mut self) -> Result<u32, SpecError> {
        match self.peek() {
            Some(Tok::Number(s)) if !s.contains('.') => {
                let v: u32 = match s.parse() {
                    Ok(v) => v,
                    Err(_) => return self.bad_param(format!("integer `{s}` out of range")),
                };
                self.pos += 1;
                Ok(v)
            }
            Some(found) => {
                let found = found.describe();
                self.err(format!("expected integer, found {found}"))
            }
            None => self.err("expected integer at end of line"),
        }
    }

    /// `INT (+ INT)*`, summed.
    fn integer_sum(&mut self) -> Result<u32, SpecError> {
        let mut total = self.integer()?;
        while self.eat(&Tok::Plus) {
            let next = self.integer()?;
            total = match total.checked_add(next) {
                Some(v) => v,
                None => return self.bad_param("integer sum out of range"),
            };
        }
        Ok(total)
    }

    fn signed_integer(&mut self) -> Result<i64, SpecError> {
        let negative = self.eat(&Tok::Minus);
        let v = i64::from(self.integer()?);
        Ok(if negative { -v } else { v })
    }

    /// A rational literal: `0.95`, `1`, or `19/20`.
    fn rational(&mut self) -> Result<Ratio<u64>, SpecError> {
        let first = match self.peek() {
            Some(Tok::Number(s)) => s.clone(),
            Some(found) => {
                let found = found.describe();
                return self.err(format!("expected rational, found {found}"));
            }
            None => return self.err("expected rational at end of line"),
        };
        self.pos += 1;
        let text = if !first.contains('.') && self.eat(&Tok::Slash) {
            match self.next() {
                Some(Tok::Number(den)) if !den.contains('.') => format!("{first}/{den}"),
                _ => return self.err("expected denominator after `/`"),
            }
        } else {
            first
        };
        match parse_ratio(&text) {
            Ok(r) => Ok(r),
            Err(e) => self.bad_param(e),
        }
    }

    fn probability(&mut self) -> Result<Probability, SpecError> {
        let r = self.rational()?;
        match Probability::new(r) {
            Ok(p) => Ok(p),
            Err(e) => self.bad_param(e),
        }
    }

    /// Trailing `prob P`, defaulting when absent.
    fn prob_suffix(&mut self) -> Result<Probability, SpecError> {
        if self.eat_keyword("prob") {
            self.probability()
        } else {
            Ok(default_probability())
        }
    }

    fn opt_prob_param(&mut self, word: &str) -> Result<Option<Probability>, SpecError> {
        if self.eat_keyword(word) {
            Ok(Some(self.probability()?))
        } else {
            Ok(None)
        }
    }

    fn at_end(&self) -> bool {
        self.pos == self.toks.len()
    }

    fn expect_end(&self) -> Result<(), SpecError> {
        if self.at_end() {
            Ok(())
        } else {
            let found = self.peek().unwrap().describe();
            self.err(format!("unexpected {found} after statement"))
        }
    }

    // expr := primary [ "delayFor" INTSUM "on" primary ]
    fn clock_expr(&mut self) -> Result<ClockExpr, SpecError> {
        let base = self.primary_expr()?;
        if self.eat_keyword("delayFor") {
            let delay = self.integer_sum()?;
            self.expect_keyword("on")?;
            let reference = self.primary_expr()?;
            Ok(ClockExpr::delay_for(base, delay, reference))
        } else {
            Ok(base)
        }
    }

    fn primary_expr(&mut self) -> Result<ClockExpr, SpecError> {
        if self.eat_keyword("periodicOn") {
            let base = self.primary_expr()?;
            self.expect_keyword("period")?;
            let period = self.integer()?;
            return Ok(ClockExpr::periodic_on(base, period));
        }
        let is_inf = self.peek_keyword("inf");
        if is_inf || self.peek_keyword("sup") {
            self.pos += 1;
            self.expect(Tok::LParen)?;
            let left = self.clock_expr()?;
            self.expect(Tok::Comma)?;
            let right = self.clock_expr()?;
            self.expect(Tok::RParen)?;
            return Ok(if is_inf {
                ClockExpr::inf(left, right)
            } else {
                ClockExpr::sup(left, right)
            });
        }
        if self.eat(&Tok::LBrace) {
            let inner = self.clock_expr()?;
            self.expect(Tok::RBrace)?;
            return Ok(inner);
        }
        Ok(ClockExpr::Clock(self.clock_name()?))
    }

    fn relation_kind(&mut self) -> Result<RelationKind, SpecError> {
        for (word, kind) in RELATION_KEYWORDS {
            if self.eat_keyword(word) {
                return Ok(kind);
            }
        }
        self.err("expected a relation (subclock, coincides, excludes, causes, precedes)")
    }

    fn constraint_item(&mut self) -> Result<ConstraintItem, SpecError> {
        if let Some(Tok::Ident(word)) = self.peek() {
            if TEMPLATE_KEYWORDS.contains(&word.as_str()) {
                let word = word.clone();
                self.pos += 1;
                return Ok(ConstraintItem::Template(self.template(&word)?));
            }
        }
        let left = self.clock_expr()?;
        let kind = self.relation_kind()?;
        let right = self.clock_expr()?;
        let prob = self.prob_suffix()?;
        Ok(ConstraintItem::Relation(ProbRelation {
            kind,
            left,
            right,
            prob,
        }))
    }

    fn template(&mut self, word: &str) -> Result<ConstraintTemplate, SpecError> {
        match word {
            "periodic" => {
                let event = self.clock_name()?;
                self.expect_keyword("period")?;
                let period = self.integer()?;
                let prob = self.prob_suffix()?;
                Ok(ConstraintTemplate::Periodic {
                    event,
                    period,
                    prob,
                })
            }
            "execution" => {
                self.expect_keyword("from")?;
                let start = self.clock_name()?;
                self.expect_keyword("to")?;
                let end = self.clock_name()?;
                self.expect_keyword("within")?;
                self.expect(Tok::LBracket)?;
                let lower = self.integer()?;
                self.expect(Tok::Comma)?;
                let upper = self.integer()?;
                self.expect(Tok::RBracket)?;
                let prob = self.prob_suffix()?;
                Ok(ConstraintTemplate::Execution {
                    start,
                    end,
                    lower,
                    upper,
                    prob,
                })
            }
            "sporadic" => {
                self.expect_keyword("from")?;
                let source = self.clock_name()?;
                self.expect_keyword("to")?;
                let target = self.clock_name()?;
                self.expect_keyword("gap")?;
                let gap = self.integer()?;
                let prob = self.prob_suffix()?;
                Ok(ConstraintTemplate::Sporadic {
                    source,
                    target,
                    gap,
                    prob,
                })
            }
            "synchronization" => {
                self.expect_keyword("of")?;
                let mut events = vec![self.clock_name()?];
                self.expect(Tok::Comma)?;
                events.push(self.clock_name()?);
                while self.eat(&Tok::Comma) {
                    events.push(self.clock_name()?);
                }
                self.expect_keyword("tolerance")?;
                let tolerance = self.integer()?;
                let prob = self.prob_suffix()?;
                Ok(ConstraintTemplate::Synchronization {
                    events,
                    tolerance,
                    prob,
                })
            }
            "e2e" => {
                self.expect_keyword("from")?;
                let source = self.clock_name()?;
                self.expect_keyword("to")?;
                let target = self.clock_name()?;
                self.expect_keyword("within")?;
                let (lower, upper) = if self.eat(&Tok::LBracket) {
                    let lower = self.integer()?;
                    self.expect(Tok::Comma)?;
                    let upper = self.integer()?;
                    self.expect(Tok::RBracket)?;
                    (Some(lower), upper)
                } else {
                    (None, self.integer()?)
                };
                let prob = self.prob_suffix()?;
                Ok(ConstraintTemplate::EndToEnd {
                    source,
                    target,
                    lower,
                    upper,
                    prob,
                })
            }
            "comparison" => {
                let event = self.clock_name()?;
                self.expect_keyword("bound")?;
                let bound = self.integer()?;
                self.expect_keyword("wcet")?;
                let wcet_sum = self.integer_sum()?;
                let prob = self.prob_suffix()?;
                Ok(ConstraintTemplate::Comparison {
                    event,
                    bound,
                    wcet_sum,
                    prob,
                })
            }
            "exclusion" => {
                let left = self.clock_name()?;
                let right = self.clock_name()?;
                let prob = self.prob_suffix()?;
                Ok(ConstraintTemplate::Exclusion { left, right, prob })
            }
            _ => unreachable!("checked against TEMPLATE_KEYWORDS"),
        }
    }

    // mon := IDENT | ("always" | "eventually") pred
    fn monitor_ref(&mut self) -> Result<MonitorRef, SpecError> {
        if self.eat_keyword("always") {
            return Ok(MonitorRef::State {
                mode: PredMode::Always,
                pred: self.pred()?,
            });
        }
        if self.eat_keyword("eventually") {
            return Ok(MonitorRef::State {
                mode: PredMode::Eventually,
                pred: self.pred()?,
            });
        }
        Ok(MonitorRef::Constraint(self.ident()?))
    }

    fn pred(&mut self) -> Result<Pred, SpecError> {
        let mut left = self.pred_and()?;
        while self.eat(&Tok::OrOr) {
            let right = self.pred_and()?;
            left = Pred::Or(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn pred_and(&mut self) -> Result<Pred, SpecError> {
        let mut left = self.pred_unary()?;
        while self.eat(&Tok::AndAnd) {
            let right = self.pred_unary()?;
            left = Pred::And(Box::new(left), Box::new(right));
        }
        Ok(left)
    }

    fn pred_unary(&mut self) -> Result<Pred, SpecError> {
        if self.eat(&Tok::Bang) {
            return Ok(Pred::Not(Box::new(self.pred_unary()?)));
        }
        if self.eat(&Tok::LParen) {
            let inner = self.pred()?;
            self.expect(Tok::RParen)?;
            return Ok(inner);
        }
        let left = self.state_expr()?;
        let op = match self.next() {
            Some(Tok::Le) => CmpOp::Le,
            Some(Tok::Lt) => CmpOp::Lt,
            Some(Tok::Ge) => CmpOp::Ge,
            Some(Tok::Gt) => CmpOp::Gt,
            Some(Tok::EqEq) => CmpOp::Eq,
            Some(Tok::Ne) => CmpOp::Ne,
            _ => {
                self.pos = self.pos.saturating_sub(1);
                return self.err("expected comparison operator");
            }
        };
        let right = self.state_expr()?;
        Ok(Pred::Cmp { left, op, right })
    }

    fn state_expr(&mut self) -> Result<StateExpr, SpecError> {
        for (word, build) in [
            ("history", StateExpr::History as fn(ClockId) -> StateExpr),
            ("tick", StateExpr::Tick as fn(ClockId) -> StateExpr),
            ("interval", StateExpr::Interval as fn(ClockId) -> StateExpr),
        ] {
            if self.eat_keyword(word) {
                self.expect(Tok::LParen)?;
                let clock = self.clock_name()?;
                self.expect(Tok::RParen)?;
                return Ok(build(clock));
            }
        }
        Ok(StateExpr::Const(self.signed_integer()?))
    }

    fn query_body(&mut self) -> Result<Query, SpecError> {
        if self.eat_keyword("hypothesis") {
            let monitor = self.monitor_ref()?;
            self.expect_keyword("bound")?;
            let bound = self.integer()?;
            let prob = self.opt_prob_param("prob")?;
            let alpha = self.opt_prob_param("alpha")?;
            let beta = self.opt_prob_param("beta")?;
            let delta = self.opt_prob_param("delta")?;
            return Ok(Query::Hypothesis {
                monitor,
                bound,
                prob,
                alpha,
                beta,
                delta,
            });
        }
        if self.eat_keyword("estimate") {
            let monitor = self.monitor_ref()?;
            self.expect_keyword("bound")?;
            let bound = self.integer()?;
            let epsilon = self.opt_prob_param("epsilon")?;
            let alpha = self.opt_prob_param("alpha")?;
            let method = if self.eat_keyword("method") {
                if self.eat_keyword("exact") {
                    Some(IntervalMethod::ClopperPearson)
                } else if self.eat_keyword("normal") {
                    Some(IntervalMethod::Normal)
                } else {
                    return self.err("expected `exact` or `normal` after `method`");
                }
            } else {
                None
            };
            return Ok(Query::Estimate {
                monitor,
                bound,
                epsilon,
                alpha,
                method,
            });
        }
        if self.eat_keyword("compare") {
            let left = self.monitor_ref()?;
            self.expect_keyword("bound")?;
            let left_bound = self.integer()?;
            self.expect_keyword("with")?;
            let right = self.monitor_ref()?;
            self.expect_keyword("bound")?;
            let right_bound = self.integer()?;
            self.expect_keyword("ratio")?;
            let ratio = self.rational()?;
            return Ok(Query::Compare {
                left,
                left_bound,
                right,
                right_bound,
                ratio,
            });
        }
        if self.eat_keyword("expect") {
            let mode = if self.eat_keyword("max") {
                ExtremumMode::Max
            } else if self.eat_keyword("min") {
                ExtremumMode::Min
            } else {
                return self.err("expected `max` or `min` after `expect`");
            };
            let observable = self.state_expr()?;
            self.expect_keyword("bound")?;
            let bound = self.integer()?;
            self.expect_keyword("runs")?;
            let runs = self.integer()?;
            return Ok(Query::Expected {
                mode,
                observable,
                bound,
                runs,
            });
        }
        if self.eat_keyword("simulate") {
            let runs = self.integer()?;
            self.expect_keyword("bound")?;
            let bound = self.integer()?;
            self.expect_keyword("watch")?;
            let mut watch = vec![self.state_expr()?];
            while self.eat(&Tok::Comma) {
                watch.push(self.state_expr()?);
            }
            return Ok(Query::Simulate { runs, bound, watch });
        }
        self.err("expected a query kind (hypothesis, estimate, compare, expect, simulate)")
    }

    /// Leading `IDENT :` label, if present.
    fn opt_label(&mut self) -> Option<String> {
        if let (Some(Tok::Ident(name)), Some(Tok::Colon)) = (self.peek(), self.peek_at(1)) {
            let name = name.clone();
            self.pos += 2;
            Some(name)
        } else {
            None
        }
    }
}

/// Parses a complete spec file. The first syntax or parameter error aborts
/// the parse; name resolution and parameter sanity beyond syntax are the
/// validator's job.
pub fn parse_spec(text: &str) -> Result<SpecFile, SpecError> {
    let mut clocks: Vec<ClockId> = Vec::new();
    let mut defs = DefSet::new();
    let mut constraints: Vec<NamedConstraint> = Vec::new();
    let mut queries: Vec<NamedQuery> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let toks = lex(raw, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut p = LineParser::new(toks, lineno, raw.len());
        if p.eat_keyword("clock") {
            clocks.push(p.clock_name()?);
            while p.eat(&Tok::Comma) {
                clocks.push(p.clock_name()?);
            }
        } else if p.eat_keyword("define") {
            let name = p.clock_name()?;
            p.expect(Tok::Equals)?;
            let body = p.clock_expr()?;
            if defs.define(name, body).is_err() {
                return p.bad_param("duplicate definition");
            }
        } else if p.eat_keyword("query") {
            let id = p
                .opt_label()
                .unwrap_or_else(|| format!("Q{}", queries.len() + 1));
            let query = p.query_body()?;
            queries.push(NamedQuery { id, query });
        } else {
            let id = p
                .opt_label()
                .unwrap_or_else(|| format!("C{}", constraints.len() + 1));
            let item = p.constraint_item()?;
            constraints.push(NamedConstraint { id, item });
        }
        p.expect_end()?;
    }

    Ok(SpecFile {
        clocks,
        defs,
        constraints,
        queries,
    })
}
