//! Per-run monitors.
//!
//! A monitor reduces one run to a single yes/no: either a conjunction of
//! clock relations (what a named constraint expands to) or a temporal
//! predicate over step-indexed state. State expressions are evaluated per
//! step:
//!
//! * `history(c)` counts ticks of `c` strictly before the step,
//! * `tick(c)` is 1 when `c` ticks at the step, else 0,
//! * `interval(c)` is the distance to the previous tick of `c` when `c`
//!   ticks at the step and has ticked before, else 0.
//!
//! The same evaluation drives scalar observables: per-run extrema for mean
//! estimation and full step-indexed trajectories for simulation output.

use std::sync::Arc;

use thiserror::Error;

use crate::expr::{DefSet, Evaluator, ExprError};
use crate::relations::ProbRelation;
use crate::spec::{
    CmpOp, ExtremumMode, MonitorRef, Pred, PredMode, SpecFile, StateExpr,
};
use crate::trace::{ClockId, Run};

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("no constraint labelled `{0}`")]
    UnknownConstraint(String),
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// A property of one run.
#[derive(Debug, Clone, PartialEq)]
pub enum Monitor {
    /// Conjunction of relations; the per-relation probabilities are
    /// aggregation targets, not part of run-level satisfaction, and are
    /// ignored here.
    Relations(Vec<ProbRelation>),
    State {
        mode: PredMode,
        pred: Pred,
    },
}

impl Monitor {
    /// Resolves a query's monitor reference against the spec it came from.
    pub fn from_ref(spec: &SpecFile, m: &MonitorRef) -> Result<Monitor, MonitorError> {
        match m {
            MonitorRef::Constraint(label) => match spec.constraint(label) {
                Some(c) => Ok(Monitor::Relations(c.item.relations())),
                None => Err(MonitorError::UnknownConstraint(label.clone())),
            },
            MonitorRef::State { mode, pred } => Ok(Monitor::State {
                mode: *mode,
                pred: pred.clone(),
            }),
        }
    }

    pub fn satisfied(&self, run: &Run, defs: &DefSet) -> Result<bool, MonitorError> {
        match self {
            Monitor::Relations(rels) => {
                let eval = Evaluator::new(run, defs);
                for rel in rels {
                    let left = eval.eval(&rel.left)?;
                    let right = eval.eval(&rel.right)?;
                    if !crate::relations::check_relation(
                        rel.kind,
                        run.last_step(),
                        &left,
                        &right,
                    ) {
                        return Ok(false);
                    }
                }
                Ok(true)
            }
            Monitor::State { mode, pred } => {
                let mut walker = StateWalker::resolve(pred_exprs(pred), run, defs)?;
                for step in 0..=run.last_step() {
                    let holds = eval_pred(pred, &walker, step);
                    match mode {
                        PredMode::Always if !holds => return Ok(false),
                        PredMode::Eventually if holds => return Ok(true),
                        _ => {}
                    }
                    walker.advance(step);
                }
                Ok(*mode == PredMode::Always)
            }
        }
    }
}

/// The probability a hypothesis test should target when the query names a
/// constraint and gives no explicit one.
pub fn declared_probability(spec: &SpecFile, m: &MonitorRef) -> Option<crate::relations::Probability> {
    match m {
        MonitorRef::Constraint(label) => spec.constraint(label).map(|c| c.item.prob()),
        MonitorRef::State { .. } => None,
    }
}

/// Extremum of a state expression over all steps of one run.
pub fn extremum(
    mode: ExtremumMode,
    observable: &StateExpr,
    run: &Run,
    defs: &DefSet,
) -> Result<i64, MonitorError> {
    let mut walker = StateWalker::resolve(std::slice::from_ref(observable).iter(), run, defs)?;
    let mut best = walker.eval(observable, 0);
    walker.advance(0);
    for step in 1..=run.last_step() {
        let value = walker.eval(observable, step);
        best = match mode {
            ExtremumMode::Max => best.max(value),
            ExtremumMode::Min => best.min(value),
        };
        walker.advance(step);
    }
    Ok(best)
}

/// Step-indexed values of several state expressions: `result[step][k]` is
/// the k-th watched expression at that step.
pub fn trajectory(
    watch: &[StateExpr],
    run: &Run,
    defs: &DefSet,
) -> Result<Vec<Vec<i64>>, MonitorError> {
    let mut walker = StateWalker::resolve(watch.iter(), run, defs)?;
    let mut rows = Vec::with_capacity(run.num_steps() as usize);
    for step in 0..=run.last_step() {
        rows.push(watch.iter().map(|w| walker.eval(w, step)).collect());
        walker.advance(step);
    }
    Ok(rows)
}

/// Resolved tick lists plus a cursor per clock. The cursor at step `i`
/// always equals the number of ticks strictly before `i`, so history, the
/// current tick, and the previous tick are all O(1) per step.
struct StateWalker {
    clocks: Vec<(ClockId, Arc<[u32]>, usize)>,
}

impl StateWalker {
    fn resolve<'e>(
        exprs: impl Iterator<Item = &'e StateExpr>,
        run: &Run,
        defs: &DefSet,
    ) -> Result<StateWalker, MonitorError> {
        let eval = Evaluator::new(run, defs);
        let mut clocks: Vec<(ClockId, Arc<[u32]>, usize)> = Vec::new();
        for expr in exprs {
            let clock = match expr {
                StateExpr::History(c) | StateExpr::Tick(c) | StateExpr::Interval(c) => c,
                StateExpr::Const(_) => continue,
            };
            if clocks.iter().all(|(c, _, _)| c != clock) {
                clocks.push((clock.clone(), eval.eval_name(clock)?, 0));
            }
        }
        Ok(StateWalker { clocks })
    }

    fn entry(&self, clock: &ClockId) -> (&[u32], usize) {
        let (_, ticks, pos) = self
            .clocks
            .iter()
            .find(|(c, _, _)| c == clock)
            .expect("walker resolved every clock it is asked about");
        (ticks, *pos)
    }

    fn eval(&self, expr: &StateExpr, step: u32) -> i64 {
        match expr {
            StateExpr::Const(v) => *v,
            StateExpr::History(c) => self.entry(c).1 as i64,
            StateExpr::Tick(c) => {
                let (ticks, pos) = self.entry(c);
                i64::from(ticks.get(pos) == Some(&step))
            }
            StateExpr::Interval(c) => {
                let (ticks, pos) = self.entry(c);
                if ticks.get(pos) == Some(&step) && pos > 0 {
                    i64::from(step - ticks[pos - 1])
                } else {
                    0
                }
            }
        }
    }

    /// Call after evaluating `step` so the cursors describe `step + 1`.
    fn advance(&mut self, step: u32) {
        for (_, ticks, pos) in &mut self.clocks {
            while *pos < ticks.len() && ticks[*pos] <= step {
                *pos += 1;
            }
        }
    }
}

fn pred_exprs(pred: &Pred) -> impl Iterator<Item = &StateExpr> {
    fn collect<'p>(p: &'p Pred, out: &mut Vec<&'p StateExpr>) {
        match p {
            Pred::Cmp { left, right, .. } => {
                out.push(left);
                out.push(right);
            }
            Pred::And(l, r) | Pred::Or(l, r) => {
                collect(l, out);
                collect(r, out);
            }
            Pred::Not(inner) => collect(inner, out),
        }
    }
    let mut out = Vec::new();
    collect(pred, &mut out);
    out.into_iter()
}

fn eval_pred(pred: &Pred, walker: &StateWalker, step: u32) -> bool {
    match pred {
        Pred::Cmp { left, op, right } => {
            let l = walker.eval(left, step);
            let r = walker.eval(right, step);
            match op {
                CmpOp::Le => l <= r,
                CmpOp::Lt => l < r,
                CmpOp::Ge => l >= r,
                CmpOp::Gt => l > r,
                CmpOp::Eq => l == r,
                CmpOp::Ne => l != r,
            }
        }
        Pred::And(l, r) => eval_pred(l, walker, step) && eval_pred(r, walker, step),
        Pred::Or(l, r) => eval_pred(l, walker, step) || eval_pred(r, walker, step),
        Pred::Not(inner) => !eval_pred(inner, walker, step),
    }
}
