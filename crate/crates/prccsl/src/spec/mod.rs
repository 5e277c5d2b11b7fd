//! The constraint specification language.
//!
//! A spec file is line oriented. `#` starts a comment; blank lines are
//! ignored; every statement fits on one line:
//!
//! ```text
//! clock cmrTrig, signOut                 # declare base clocks
//! define prd50 = periodicOn ms period 50 # derived clocks
//! R1: cmrTrig coincides prd50 prob 0.95  # a relation, optionally labeled
//! R6: execution from cmrTrig to cmrOut within [20, 30] prob 0.95
//! query Q1: hypothesis R1 bound 3000
//! ```
//!
//! Constraint templates (`periodic`, `execution`, `sporadic`,
//! `synchronization`, `e2e`, `comparison`, `exclusion`) expand into plain
//! relations; see [`expand_template`]. Unlabeled constraints are named
//! `C1, C2, ...` in file order, queries `Q1, Q2, ...`. The probability
//! threshold defaults to 0.95 when omitted.
//!
//! The grammar is documented in full in `docs/spec-language.md`.

mod parse;
mod print;
mod validate;

pub use parse::{parse_spec, SpecError};
pub use print::{print_query, print_spec, print_state_expr};
pub use validate::{validate_spec, Diagnostic};

use num_rational::Ratio;

use crate::expr::{ClockExpr, DefSet};
use crate::relations::{ProbRelation, Probability, RelationKind};
use crate::trace::ClockId;

/// Threshold used when a constraint omits `prob`.
pub fn default_probability() -> Probability {
    Probability::from_parts(95, 100).expect("0.95 is a probability")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpecFile {
    pub clocks: Vec<ClockId>,
    pub defs: DefSet,
    pub constraints: Vec<NamedConstraint>,
    pub queries: Vec<NamedQuery>,
}

impl SpecFile {
    pub fn constraint(&self, id: &str) -> Option<&NamedConstraint> {
        self.constraints.iter().find(|c| c.id == id)
    }

    pub fn query(&self, id: &str) -> Option<&NamedQuery> {
        self.queries.iter().find(|q| q.id == id)
    }

    /// Relations of the named constraint, templates expanded.
    pub fn relations_of(&self, id: &str) -> Option<Vec<ProbRelation>> {
        self.constraint(id).map(|c| c.item.relations())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedConstraint {
    pub id: String,
    pub item: ConstraintItem,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintItem {
    Relation(ProbRelation),
    Template(ConstraintTemplate),
}

impl ConstraintItem {
    /// The plain relations this constraint denotes.
    pub fn relations(&self) -> Vec<ProbRelation> {
        match self {
            ConstraintItem::Relation(rel) => vec![rel.clone()],
            ConstraintItem::Template(t) => expand_template(t),
        }
    }

    pub fn prob(&self) -> Probability {
        match self {
            ConstraintItem::Relation(rel) => rel.prob,
            ConstraintItem::Template(t) => t.prob(),
        }
    }
}

/// The constraint template categories.
#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintTemplate {
    /// The event ticks with the given period, coinciding with the periodic
    /// filtering of the universal clock.
    Periodic {
        event: ClockId,
        period: u32,
        prob: Probability,
    },
    /// Each output follows its input by a delay within `[lower, upper]`
    /// milliseconds (causality on both bounds).
    Execution {
        start: ClockId,
        end: ClockId,
        lower: u32,
        upper: u32,
        prob: Probability,
    },
    /// The target event stays at least `gap` milliseconds behind each
    /// source event (strict precedence on the delayed source).
    Sporadic {
        source: ClockId,
        target: ClockId,
        gap: u32,
        prob: Probability,
    },
    /// All events occur within a sliding window of `tolerance`
    /// milliseconds: the slowest is caused by the delayed fastest.
    Synchronization {
        events: Vec<ClockId>,
        tolerance: u32,
        prob: Probability,
    },
    /// End-to-end reaction: the target follows the source within
    /// `[lower, upper]` milliseconds (strict precedence); `lower` may be
    /// omitted for an upper bound alone.
    EndToEnd {
        source: ClockId,
        target: ClockId,
        lower: Option<u32>,
        upper: u32,
        prob: Probability,
    },
    /// The event delayed by `bound` is caused by the event delayed by the
    /// accumulated worst-case execution time.
    Comparison {
        event: ClockId,
        bound: u32,
        wcet_sum: u32,
        prob: Probability,
    },
    /// The two events never tick at the same step.
    Exclusion {
        left: ClockId,
        right: ClockId,
        prob: Probability,
    },
}

impl ConstraintTemplate {
    pub fn prob(&self) -> Probability {
        match self {
            ConstraintTemplate::Periodic { prob, .. }
            | ConstraintTemplate::Execution { prob, .. }
            | ConstraintTemplate::Sporadic { prob, .. }
            | ConstraintTemplate::Synchronization { prob, .. }
            | ConstraintTemplate::EndToEnd { prob, .. }
            | ConstraintTemplate::Comparison { prob, .. }
            | ConstraintTemplate::Exclusion { prob, .. } => *prob,
        }
    }
}

fn fold_left(events: &[ClockId], op: fn(ClockExpr, ClockExpr) -> ClockExpr) -> ClockExpr {
    let mut iter = events.iter();
    let first = ClockExpr::Clock(iter.next().expect("at least one event").clone());
    iter.fold(first, |acc, e| op(acc, ClockExpr::Clock(e.clone())))
}

/// Expands a template into the relations it denotes. Nested `inf`/`sup`
/// over more than two events associate to the left.
pub fn expand_template(template: &ConstraintTemplate) -> Vec<ProbRelation> {
    let ms = ClockExpr::ms;
    match template {
        ConstraintTemplate::Periodic {
            event,
            period,
            prob,
        } => vec![ProbRelation {
            kind: RelationKind::Coincidence,
            left: ClockExpr::Clock(event.clone()),
            right: ClockExpr::periodic_on(ms(), *period),
            prob: *prob,
        }],
        ConstraintTemplate::Execution {
            start,
            end,
            lower,
            upper,
            prob,
        } => vec![
            ProbRelation {
                kind: RelationKind::Causality,
                left: ClockExpr::delay_for(ClockExpr::Clock(start.clone()), *lower, ms()),
                right: ClockExpr::Clock(end.clone()),
                prob: *prob,
            },
            ProbRelation {
                kind: RelationKind::Causality,
                left: ClockExpr::Clock(end.clone()),
                right: ClockExpr::delay_for(ClockExpr::Clock(start.clone()), *upper, ms()),
                prob: *prob,
            },
        ],
        ConstraintTemplate::Sporadic {
            source,
            target,
            gap,
            prob,
        } => vec![ProbRelation {
            kind: RelationKind::Precedence,
            left: ClockExpr::delay_for(ClockExpr::Clock(source.clone()), *gap, ms()),
            right: ClockExpr::Clock(target.clone()),
            prob: *prob,
        }],
        ConstraintTemplate::Synchronization {
            events,
            tolerance,
            prob,
        } => vec![ProbRelation {
            kind: RelationKind::Causality,
            left: fold_left(events, ClockExpr::sup),
            right: ClockExpr::delay_for(fold_left(events, ClockExpr::inf), *tolerance, ms()),
            prob: *prob,
        }],
        ConstraintTemplate::EndToEnd {
            source,
            target,
            lower,
            upper,
            prob,
        } => {
            let mut out = Vec::new();
            if let Some(lower) = lower {
                out.push(ProbRelation {
                    kind: RelationKind::Precedence,
                    left: ClockExpr::delay_for(ClockExpr::Clock(source.clone()), *lower, ms()),
                    right: ClockExpr::Clock(target.clone()),
                    prob: *prob,
                });
            }
            out.push(ProbRelation {
                kind: RelationKind::Precedence,
                left: ClockExpr::Clock(target.clone()),
                right: ClockExpr::delay_for(ClockExpr::Clock(source.clone()), *upper, ms()),
                prob: *prob,
            });
            out
        }
        ConstraintTemplate::Comparison {
            event,
            bound,
            wcet_sum,
            prob,
        } => vec![ProbRelation {
            kind: RelationKind::Causality,
            left: ClockExpr::delay_for(ClockExpr::Clock(event.clone()), *bound, ms()),
            right: ClockExpr::delay_for(ClockExpr::Clock(event.clone()), *wcet_sum, ms()),
            prob: *prob,
        }],
        ConstraintTemplate::Exclusion { left, right, prob } => vec![ProbRelation {
            kind: RelationKind::Exclusion,
            left: ClockExpr::Clock(left.clone()),
            right: ClockExpr::Clock(right.clone()),
            prob: *prob,
        }],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedQuery {
    pub id: String,
    pub query: Query,
}

/// An analysis query over a spec and a run source.
#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    /// Sequential hypothesis test that the monitor holds with probability
    /// at least `prob` (default: the constraint's own threshold).
    Hypothesis {
        monitor: MonitorRef,
        bound: u32,
        prob: Option<Probability>,
        alpha: Option<Probability>,
        beta: Option<Probability>,
        delta: Option<Probability>,
    },
    /// Confidence interval for the probability that the monitor holds.
    Estimate {
        monitor: MonitorRef,
        bound: u32,
        epsilon: Option<Probability>,
        alpha: Option<Probability>,
        method: Option<IntervalMethod>,
    },
    /// Sequential comparison of two monitor probabilities.
    Compare {
        left: MonitorRef,
        left_bound: u32,
        right: MonitorRef,
        right_bound: u32,
        ratio: Ratio<u64>,
    },
    /// Mean of a per-run extremum of an observable, with a confidence
    /// half-width and a histogram.
    Expected {
        mode: ExtremumMode,
        observable: StateExpr,
        bound: u32,
        runs: u32,
    },
    /// Raw trajectories of observables over simulated runs.
    Simulate {
        runs: u32,
        bound: u32,
        watch: Vec<StateExpr>,
    },
}

impl Query {
    pub fn bound(&self) -> u32 {
        match self {
            Query::Hypothesis { bound, .. }
            | Query::Estimate { bound, .. }
            | Query::Expected { bound, .. }
            | Query::Simulate { bound, .. } => *bound,
            Query::Compare { left_bound, .. } => *left_bound,
        }
    }
}

/// What a query checks per run: a labeled constraint, or an inline state
/// predicate evaluated at every step (`always`) or some step
/// (`eventually`).
#[derive(Debug, Clone, PartialEq)]
pub enum MonitorRef {
    Constraint(String),
    State { mode: PredMode, pred: Pred },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredMode {
    Always,
    Eventually,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pred {
    Cmp {
        left: StateExpr,
        op: CmpOp,
        right: StateExpr,
    },
    And(Box<Pred>, Box<Pred>),
    Or(Box<Pred>, Box<Pred>),
    Not(Box<Pred>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Le,
    Lt,
    Ge,
    Gt,
    Eq,
    Ne,
}

/// A step-indexed integer observable over a run.
#[derive(Debug, Clone, PartialEq)]
pub enum StateExpr {
    /// Ticks of the clock strictly before the current step.
    History(ClockId),
    /// 1 when the clock ticks at the current step, else 0.
    Tick(ClockId),
    /// At a tick with a predecessor, the distance to the previous tick;
    /// 0 elsewhere.
    Interval(ClockId),
    Const(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumMode {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalMethod {
    /// Clopper-Pearson (exact binomial) interval.
    ClopperPearson,
    /// Normal approximation, for comparison only.
    Normal,
}
