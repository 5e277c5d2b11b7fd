//! Canonical text form for spec files.
//!
//! Printing is the inverse of parsing on ASTs: `parse_spec(print_spec(s))`
//! yields `s` back. The canonical form groups statements (clocks, defines,
//! constraints, queries), always writes labels, and always writes the
//! probability on constraints. Optional query parameters are written only
//! when present, in the order the grammar accepts them.

use std::fmt::Write;

use crate::expr::ClockExpr;
use crate::relations::{format_ratio, ProbRelation};

use super::{
    CmpOp, ConstraintItem, ConstraintTemplate, ExtremumMode, IntervalMethod, MonitorRef,
    NamedQuery, Pred, PredMode, Query, SpecFile, StateExpr,
};

pub fn print_spec(spec: &SpecFile) -> String {
    let mut out = String::new();
    if !spec.clocks.is_empty() {
        let names: Vec<&str> = spec.clocks.iter().map(|c| c.as_str()).collect();
        writeln!(out, "clock {}", names.join(", ")).unwrap();
    }
    for (name, body) in spec.defs.iter() {
        writeln!(out, "define {} = {}", name, expr_str(body)).unwrap();
    }
    for c in &spec.constraints {
        writeln!(out, "{}: {}", c.id, item_str(&c.item)).unwrap();
    }
    for q in &spec.queries {
        writeln!(out, "query {}: {}", q.id, query_str(&q.query)).unwrap();
    }
    out
}

/// The canonical one-line form of a named query, as `print_spec` writes it.
pub fn print_query(q: &NamedQuery) -> String {
    format!("query {}: {}", q.id, query_str(&q.query))
}

/// The canonical form of one state expression.
pub fn print_state_expr(e: &StateExpr) -> String {
    state_str(e)
}

fn expr_str(e: &ClockExpr) -> String {
    match e {
        ClockExpr::Clock(c) => c.as_str().to_owned(),
        ClockExpr::PeriodicOn { base, period } => {
            format!("periodicOn {} period {}", primary_str(base), period)
        }
        ClockExpr::DelayFor {
            base,
            delay,
            reference,
        } => format!(
            "{} delayFor {} on {}",
            primary_str(base),
            delay,
            primary_str(reference)
        ),
        ClockExpr::Inf(l, r) => format!("inf({}, {})", expr_str(l), expr_str(r)),
        ClockExpr::Sup(l, r) => format!("sup({}, {})", expr_str(l), expr_str(r)),
    }
}

/// Like [`expr_str`] but braces operands the grammar only accepts in
/// primary position.
fn primary_str(e: &ClockExpr) -> String {
    match e {
        ClockExpr::DelayFor { .. } => format!("{{{}}}", expr_str(e)),
        _ => expr_str(e),
    }
}

fn relation_str(rel: &ProbRelation) -> String {
    let kind = match rel.kind {
        crate::relations::RelationKind::Subclock => "subclock",
        crate::relations::RelationKind::Coincidence => "coincides",
        crate::relations::RelationKind::Exclusion => "excludes",
        crate::relations::RelationKind::Causality => "causes",
        crate::relations::RelationKind::Precedence => "precedes",
    };
    format!(
        "{} {} {} prob {}",
        expr_str(&rel.left),
        kind,
        expr_str(&rel.right),
        rel.prob
    )
}

fn item_str(item: &ConstraintItem) -> String {
    match item {
        ConstraintItem::Relation(rel) => relation_str(rel),
        ConstraintItem::Template(t) => template_str(t),
    }
}

fn template_str(t: &ConstraintTemplate) -> String {
    match t {
        ConstraintTemplate::Periodic {
            event,
            period,
            prob,
        } => format!("periodic {event} period {period} prob {prob}"),
        ConstraintTemplate::Execution {
            start,
            end,
            lower,
            upper,
            prob,
        } => format!("execution from {start} to {end} within [{lower}, {upper}] prob {prob}"),
        ConstraintTemplate::Sporadic {
            source,
            target,
            gap,
            prob,
        } => format!("sporadic from {source} to {target} gap {gap} prob {prob}"),
        ConstraintTemplate::Synchronization {
            events,
            tolerance,
            prob,
        } => {
            let names: Vec<&str> = events.iter().map(|c| c.as_str()).collect();
            format!(
                "synchronization of {} tolerance {tolerance} prob {prob}",
                names.join(", ")
            )
        }
        ConstraintTemplate::EndToEnd {
            source,
            target,
            lower,
            upper,
            prob,
        } => match lower {
            Some(lo) => {
                format!("e2e from {source} to {target} within [{lo}, {upper}] prob {prob}")
            }
            None => format!("e2e from {source} to {target} within {upper} prob {prob}"),
        },
        ConstraintTemplate::Comparison {
            event,
            bound,
            wcet_sum,
            prob,
        } => format!("comparison {event} bound {bound} wcet {wcet_sum} prob {prob}"),
        ConstraintTemplate::Exclusion { left, right, prob } => {
            format!("exclusion {left} {right} prob {prob}")
        }
    }
}

fn monitor_str(m: &MonitorRef) -> String {
    match m {
        MonitorRef::Constraint(name) => name.clone(),
        MonitorRef::State { mode, pred } => {
            let word = match mode {
                PredMode::Always => "always",
                PredMode::Eventually => "eventually",
            };
            format!("{word} {}", pred_or_str(pred))
        }
    }
}

// The three pred printers mirror the parser's precedence levels so the
// reparsed tree is shaped identically.
fn pred_or_str(p: &Pred) -> String {
    match p {
        Pred::Or(l, r) => format!("{} || {}", pred_or_str(l), pred_and_str(r)),
        _ => pred_and_str(p),
    }
}

fn pred_and_str(p: &Pred) -> String {
    match p {
        Pred::And(l, r) => format!("{} && {}", pred_and_str(l), pred_unary_str(r)),
        Pred::Or(..) => format!("({})", pred_or_str(p)),
        _ => pred_unary_str(p),
    }
}

fn pred_unary_str(p: &Pred) -> String {
    match p {
        Pred::Not(inner) => format!("!({})", pred_or_str(inner)),
        Pred::Cmp { left, op, right } => {
            format!("{} {} {}", state_str(left), cmp_str(*op), state_str(right))
        }
        Pred::And(..) | Pred::Or(..) => format!("({})", pred_or_str(p)),
    }
}

fn cmp_str(op: CmpOp) -> &'static str {
    match op {
        CmpOp::Le => "<=",
        CmpOp::Lt => "<",
        CmpOp::Ge => ">=",
        CmpOp::Gt => ">",
        CmpOp::Eq => "==",
        CmpOp::Ne => "!=",
    }
}

fn state_str(e: &StateExpr) -> String {
    match e {
        StateExpr::History(c) => format!("history({c})"),
        StateExpr::Tick(c) => format!("tick({c})"),
        StateExpr::Interval(c) => format!("interval({c})"),
        StateExpr::Const(v) => v.to_string(),
    }
}

fn query_str(q: &Query) -> String {
    match q {
        Query::Hypothesis {
            monitor,
            bound,
            prob,
            alpha,
            beta,
            delta,
        } => {
            let mut s = format!("hypothesis {} bound {bound}", monitor_str(monitor));
            for (word, value) in [
                ("prob", prob),
                ("alpha", alpha),
                ("beta", beta),
                ("delta", delta),
            ] {
                if let Some(v) = value {
                    write!(s, " {word} {v}").unwrap();
                }
            }
            s
        }
        Query::Estimate {
            monitor,
            bound,
            epsilon,
            alpha,
            method,
        } => {
            let mut s = format!("estimate {} bound {bound}", monitor_str(monitor));
            for (word, value) in [("epsilon", epsilon), ("alpha", alpha)] {
                if let Some(v) = value {
                    write!(s, " {word} {v}").unwrap();
                }
            }
            match method {
                Some(IntervalMethod::ClopperPearson) => s.push_str(" method exact"),
                Some(IntervalMethod::Normal) => s.push_str(" method normal"),
                None => {}
            }
            s
        }
        Query::Compare {
            left,
            left_bound,
            right,
            right_bound,
            ratio,
        } => format!(
            "compare {} bound {left_bound} with {} bound {right_bound} ratio {}",
            monitor_str(left),
            monitor_str(right),
            format_ratio(*ratio)
        ),
        Query::Expected {
            mode,
            observable,
            bound,
            runs,
        } => {
            let word = match mode {
                ExtremumMode::Max => "max",
                ExtremumMode::Min => "min",
            };
            format!(
                "expect {word} {} bound {bound} runs {runs}",
                state_str(observable)
            )
        }
        Query::Simulate { runs, bound, watch } => {
            let watched: Vec<String> = watch.iter().map(state_str).collect();
            format!("simulate {runs} bound {bound} watch {}", watched.join(", "))
        }
    }
}
