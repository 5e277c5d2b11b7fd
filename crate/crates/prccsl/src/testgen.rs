//! Seeded generation of random well-formed spec files.
//!
//! Compiled only with the `test-support` feature; round-trip and fuzz
//! tests use it to cover the grammar far beyond the handwritten fixtures.
//! Every produced spec passes `validate_spec` by construction.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::expr::ClockExpr;
use crate::relations::{Probability, ProbRelation, RelationKind};
use crate::spec::{
    CmpOp, ConstraintItem, ConstraintTemplate, ExtremumMode, IntervalMethod, MonitorRef,
    NamedConstraint, NamedQuery, Pred, PredMode, Query, SpecFile, StateExpr,
};
use crate::trace::ClockId;

/// Thresholds safe for hypothesis queries at any delta this module emits.
const PROBS: [(u64, u64); 7] = [(1, 2), (3, 4), (19, 20), (9, 10), (3, 5), (1, 3), (7, 10)];
const RATES: [(u64, u64); 5] = [(1, 20), (1, 10), (1, 50), (3, 100), (2, 5)];
const DELTAS: [(u64, u64); 2] = [(1, 100), (1, 50)];
const EPSILONS: [(u64, u64); 3] = [(1, 20), (1, 10), (1, 4)];
const RATIOS: [(u64, u64); 5] = [(11, 10), (1, 1), (3, 2), (2, 1), (6, 5)];

fn pick<R: Rng>(rng: &mut R, table: &[(u64, u64)]) -> Probability {
    let (n, d) = *table.choose(rng).unwrap();
    Probability::from_parts(n, d).unwrap()
}

fn maybe<R: Rng, T>(rng: &mut R, value: impl FnOnce(&mut R) -> T) -> Option<T> {
    if rng.gen_bool(0.5) {
        Some(value(rng))
    } else {
        None
    }
}

fn clock_of<R: Rng>(rng: &mut R, pool: &[ClockId]) -> ClockId {
    pool.choose(rng).unwrap().clone()
}

fn expr<R: Rng>(rng: &mut R, pool: &[ClockId], depth: u32) -> ClockExpr {
    if depth == 0 || rng.gen_bool(0.4) {
        if rng.gen_bool(0.15) {
            ClockExpr::ms()
        } else {
            ClockExpr::Clock(clock_of(rng, pool))
        }
    } else {
        match rng.gen_range(0..4) {
            0 => ClockExpr::periodic_on(expr(rng, pool, depth - 1), rng.gen_range(1..=20)),
            1 => ClockExpr::delay_for(
                expr(rng, pool, depth - 1),
                rng.gen_range(0..=10),
                expr(rng, pool, depth - 1),
            ),
            2 => ClockExpr::inf(expr(rng, pool, depth - 1), expr(rng, pool, depth - 1)),
            _ => ClockExpr::sup(expr(rng, pool, depth - 1), expr(rng, pool, depth - 1)),
        }
    }
}

fn state<R: Rng>(rng: &mut R, pool: &[ClockId]) -> StateExpr {
    match rng.gen_range(0..4) {
        0 => StateExpr::History(clock_of(rng, pool)),
        1 => StateExpr::Tick(clock_of(rng, pool)),
        2 => StateExpr::Interval(clock_of(rng, pool)),
        _ => StateExpr::Const(rng.gen_range(0..=1000)),
    }
}

fn pred<R: Rng>(rng: &mut R, pool: &[ClockId], depth: u32) -> Pred {
    if depth == 0 || rng.gen_bool(0.5) {
        let op = *[
            CmpOp::Le,
            CmpOp::Lt,
            CmpOp::Ge,
            CmpOp::Gt,
            CmpOp::Eq,
            CmpOp::Ne,
        ]
        .choose(rng)
        .unwrap();
        Pred::Cmp {
            left: state(rng, pool),
            op,
            right: state(rng, pool),
        }
    } else {
        match rng.gen_range(0..3) {
            0 => Pred::And(
                Box::new(pred(rng, pool, depth - 1)),
                Box::new(pred(rng, pool, depth - 1)),
            ),
            1 => Pred::Or(
                Box::new(pred(rng, pool, depth - 1)),
                Box::new(pred(rng, pool, depth - 1)),
            ),
            _ => Pred::Not(Box::new(pred(rng, pool, depth - 1))),
        }
    }
}

fn template<R: Rng>(rng: &mut R, pool: &[ClockId]) -> ConstraintTemplate {
    let prob = pick(rng, &PROBS);
    match rng.gen_range(0..7) {
        0 => ConstraintTemplate::Periodic {
            event: clock_of(rng, pool),
            period: rng.gen_range(1..=100),
            prob,
        },
        1 => {
            let lower = rng.gen_range(0..=50);
            ConstraintTemplate::Execution {
                start: clock_of(rng, pool),
                end: clock_of(rng, pool),
                lower,
                upper: rng.gen_range(lower..=lower + 100),
                prob,
            }
        }
        2 => ConstraintTemplate::Sporadic {
            source: clock_of(rng, pool),
            target: clock_of(rng, pool),
            gap: rng.gen_range(1..=100),
            prob,
        },
        3 if pool.len() >= 2 => {
            let mut events = pool.to_vec();
            events.shuffle(rng);
            events.truncate(rng.gen_range(2..=pool.len().min(5)));
            ConstraintTemplate::Synchronization {
                events,
                tolerance: rng.gen_range(1..=50),
                prob,
            }
        }
        4 => {
            let lower = maybe(rng, |r| r.gen_range(0..=50));
            ConstraintTemplate::EndToEnd {
                source: clock_of(rng, pool),
                target: clock_of(rng, pool),
                lower,
                upper: rng.gen_range(lower.unwrap_or(0)..=lower.unwrap_or(0) + 200),
                prob,
            }
        }
        5 => ConstraintTemplate::Comparison {
            event: clock_of(rng, pool),
            bound: rng.gen_range(1..=500),
            wcet_sum: rng.gen_range(1..=500),
            prob,
        },
        _ => ConstraintTemplate::Exclusion {
            left: clock_of(rng, pool),
            right: clock_of(rng, pool),
            prob,
        },
    }
}

fn monitor<R: Rng>(rng: &mut R, pool: &[ClockId], labels: &[String]) -> MonitorRef {
    if !labels.is_empty() && rng.gen_bool(0.6) {
        MonitorRef::Constraint(labels.choose(rng).unwrap().clone())
    } else {
        MonitorRef::State {
            mode: if rng.gen_bool(0.5) {
                PredMode::Always
            } else {
                PredMode::Eventually
            },
            pred: pred(rng, pool, 2),
        }
    }
}

fn query<R: Rng>(rng: &mut R, pool: &[ClockId], labels: &[String]) -> Query {
    match rng.gen_range(0..5) {
        0 => Query::Hypothesis {
            monitor: monitor(rng, pool, labels),
            bound: rng.gen_range(1..=5000),
            prob: maybe(rng, |r| pick(r, &PROBS)),
            alpha: maybe(rng, |r| pick(r, &RATES)),
            beta: maybe(rng, |r| pick(r, &RATES)),
            delta: maybe(rng, |r| pick(r, &DELTAS)),
        },
        1 => Query::Estimate {
            monitor: monitor(rng, pool, labels),
            bound: rng.gen_range(1..=5000),
            epsilon: maybe(rng, |r| pick(r, &EPSILONS)),
            alpha: maybe(rng, |r| pick(r, &RATES)),
            method: maybe(rng, |r| {
                if r.gen_bool(0.5) {
                    IntervalMethod::ClopperPearson
                } else {
                    IntervalMethod::Normal
                }
            }),
        },
        2 => {
            let (n, d) = *RATIOS.choose(rng).unwrap();
            Query::Compare {
                left: monitor(rng, pool, labels),
                left_bound: rng.gen_range(1..=5000),
                right: monitor(rng, pool, labels),
                right_bound: rng.gen_range(1..=5000),
                ratio: num_rational::Ratio::new(n, d),
            }
        }
        3 => Query::Expected {
            mode: if rng.gen_bool(0.5) {
                ExtremumMode::Max
            } else {
                ExtremumMode::Min
            },
            observable: state(rng, pool),
            bound: rng.gen_range(1..=5000),
            runs: rng.gen_range(2..=200),
        },
        _ => Query::Simulate {
            runs: rng.gen_range(1..=10),
            bound: rng.gen_range(1..=5000),
            watch: (0..rng.gen_range(1..=3)).map(|_| state(rng, pool)).collect(),
        },
    }
}

/// One random spec: declared clocks, a few acyclic definitions, labelled
/// constraints of every shape, and queries of every kind.
pub fn random_spec<R: Rng>(rng: &mut R) -> SpecFile {
    let n_clocks = rng.gen_range(1..=6);
    let clocks: Vec<ClockId> = (0..n_clocks)
        .map(|i| {
            let style = ["c", "ev_", "clk_"][i % 3];
            ClockId::new(format!("{style}{i}"))
        })
        .collect();

    let mut spec = SpecFile {
        clocks: clocks.clone(),
        defs: Default::default(),
        constraints: Vec::new(),
        queries: Vec::new(),
    };

    // Definitions may reference earlier definitions, never later ones, so
    // the dependency graph stays acyclic.
    let mut pool = clocks;
    for i in 0..rng.gen_range(0..=3) {
        let name = ClockId::new(format!("d{i}"));
        let body = expr(rng, &pool, 2);
        spec.defs.define(name.clone(), body).unwrap();
        pool.push(name);
    }

    let mut labels = Vec::new();
    for i in 0..rng.gen_range(0..=6) {
        let id = format!("K{i}");
        let item = if rng.gen_bool(0.5) {
            ConstraintItem::Relation(ProbRelation {
                kind: *[
                    RelationKind::Subclock,
                    RelationKind::Coincidence,
                    RelationKind::Exclusion,
                    RelationKind::Causality,
                    RelationKind::Precedence,
                ]
                .choose(rng)
                .unwrap(),
                left: expr(rng, &pool, 2),
                right: expr(rng, &pool, 2),
                prob: pick(rng, &PROBS),
            })
        } else {
            ConstraintItem::Template(template(rng, &pool))
        };
        labels.push(id.clone());
        spec.constraints.push(NamedConstraint { id, item });
    }

    for i in 0..rng.gen_range(0..=5) {
        spec.queries.push(NamedQuery {
            id: format!("Q{i}"),
            query: query(rng, &pool, &labels),
        });
    }

    spec
}
