//! Clock expressions and their evaluation over a run.
//!
//! An expression denotes a derived clock: a tick list computed from the
//! tick lists of base clocks. The forms are
//!
//! * `periodicOn base period q`: every q-th tick of `base` (the q-th,
//!   2q-th, ...), so the result has `floor(|base| / q)` ticks.
//! * `base delayFor d on ref`: each tick of `base` at step `s` spawns an
//!   instance that fires at the step of the d-th tick of `ref` strictly
//!   after `s`. Instances may overlap; instances whose d-th reference tick
//!   never arrives are dropped; instances firing at the same step coalesce
//!   into one tick. `d = 0` is the base clock itself.
//! * `inf(a, b)`: the slowest clock faster than both. Its k-th tick is at
//!   `min` of the k-th ticks of `a` and `b`; once the shorter operand is
//!   exhausted the remaining ticks follow the longer one.
//! * `sup(a, b)`: the fastest clock slower than both. Its k-th tick is at
//!   `max` of the k-th ticks, stopping with the shorter operand.
//!
//! Two identities tie these to histories and are kept under test: at every
//! step, the history of `inf(a, b)` equals `max(H_a, H_b)` and the history
//! of `sup(a, b)` equals `min(H_a, H_b)`.
//!
//! The clock name `ms` is reserved for the universal clock. It ticks at
//! every step of every run (one step is one millisecond) and is synthesized
//! during evaluation, so traces never need to record it.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use thiserror::Error;

use crate::trace::{ClockId, Run};

/// Reserved name of the universal clock, ticking at every step.
pub const UNIVERSAL_CLOCK: &str = "ms";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ClockExpr {
    Clock(ClockId),
    PeriodicOn {
        base: Box<ClockExpr>,
        period: u32,
    },
    DelayFor {
        base: Box<ClockExpr>,
        delay: u32,
        reference: Box<ClockExpr>,
    },
    Inf(Box<ClockExpr>, Box<ClockExpr>),
    Sup(Box<ClockExpr>, Box<ClockExpr>),
}

impl ClockExpr {
    pub fn clock(name: impl Into<ClockId>) -> Self {
        ClockExpr::Clock(name.into())
    }

    /// The universal clock `ms`.
    pub fn ms() -> Self {
        ClockExpr::clock(UNIVERSAL_CLOCK)
    }

    pub fn periodic_on(base: ClockExpr, period: u32) -> Self {
        ClockExpr::PeriodicOn {
            base: Box::new(base),
            period,
        }
    }

    pub fn delay_for(base: ClockExpr, delay: u32, reference: ClockExpr) -> Self {
        ClockExpr::DelayFor {
            base: Box::new(base),
            delay,
            reference: Box::new(reference),
        }
    }

    pub fn inf(left: ClockExpr, right: ClockExpr) -> Self {
        ClockExpr::Inf(Box::new(left), Box::new(right))
    }

    pub fn sup(left: ClockExpr, right: ClockExpr) -> Self {
        ClockExpr::Sup(Box::new(left), Box::new(right))
    }

    /// Base clock names referenced anywhere in the expression.
    pub fn referenced_clocks(&self) -> Vec<ClockId> {
        let mut out = Vec::new();
        self.collect_clocks(&mut out);
        out
    }

    fn collect_clocks(&self, out: &mut Vec<ClockId>) {
        match self {
            ClockExpr::Clock(c) => {
                if !out.contains(c) {
                    out.push(c.clone());
                }
            }
            ClockExpr::PeriodicOn { base, .. } => base.collect_clocks(out),
            ClockExpr::DelayFor {
                base, reference, ..
            } => {
                base.collect_clocks(out);
                reference.collect_clocks(out);
            }
            ClockExpr::Inf(l, r) | ClockExpr::Sup(l, r) => {
                l.collect_clocks(out);
                r.collect_clocks(out);
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("unknown clock `{clock}`")]
    UnknownClock { clock: ClockId },
    #[error("definition of `{clock}` is cyclic")]
    CyclicDefinition { clock: ClockId },
    #[error("clock `{clock}` defined twice")]
    DuplicateDefinition { clock: ClockId },
    #[error("periodicOn period must be at least 1")]
    InvalidPeriod,
}

/// Every q-th tick of `base`.
pub fn eval_periodic_on(base: &[u32], period: u32) -> Result<Vec<u32>, ExprError> {
    if period == 0 {
        return Err(ExprError::InvalidPeriod);
    }
    Ok(base
        .iter()
        .copied()
        .skip(period as usize - 1)
        .step_by(period as usize)
        .collect())
}

/// Each base tick spawns an instance firing at the step of the `delay`-th
/// reference tick strictly after the spawn step.
pub fn eval_delay_for(base: &[u32], delay: u32, reference: &[u32]) -> Vec<u32> {
    if delay == 0 {
        return base.to_vec();
    }
    let mut out = Vec::new();
    for &s in base {
        let first_after = reference.partition_point(|&r| r <= s);
        let fire = first_after + delay as usize - 1;
        if fire < reference.len() {
            out.push(reference[fire]);
        }
    }
    // Firing steps are nondecreasing in the spawn step; coalesce instances
    // that fire together.
    out.dedup();
    out
}

/// k-th tick at the min of the operands' k-th ticks, continuing with the
/// longer operand.
pub fn eval_infimum(left: &[u32], right: &[u32]) -> Vec<u32> {
    let common = left.len().min(right.len());
    let mut out = Vec::with_capacity(left.len().max(right.len()));
    for k in 0..common {
        out.push(left[k].min(right[k]));
    }
    out.extend_from_slice(&left[common..]);
    out.extend_from_slice(&right[common..]);
    out.dedup();
    out
}

/// k-th tick at the max of the operands' k-th ticks, stopping with the
/// shorter operand.
pub fn eval_supremum(left: &[u32], right: &[u32]) -> Vec<u32> {
    let common = left.len().min(right.len());
    (0..common).map(|k| left[k].max(right[k])).collect()
}

/// Named derived-clock definitions, in declaration order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DefSet {
    names: Vec<ClockId>,
    map: HashMap<ClockId, ClockExpr>,
}

impl DefSet {
    pub fn new() -> Self {
        DefSet::default()
    }

    pub fn define(&mut self, name: ClockId, expr: ClockExpr) -> Result<(), ExprError> {
        if self.map.contains_key(&name) {
            return Err(ExprError::DuplicateDefinition { clock: name });
        }
        self.names.push(name.clone());
        self.map.insert(name, expr);
        Ok(())
    }

    pub fn get(&self, name: &ClockId) -> Option<&ClockExpr> {
        self.map.get(name)
    }

    pub fn names(&self) -> &[ClockId] {
        &self.names
    }

    /// Pairs in declaration order.
    pub fn iter(&self) -> impl Iterator<Item = (&ClockId, &ClockExpr)> {
        self.names.iter().map(|n| (n, &self.map[n]))
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Evaluates expressions over one run, resolving defined names and caching
/// their tick lists. Detects cyclic definitions on the fly.
pub struct Evaluator<'a> {
    run: &'a Run,
    defs: &'a DefSet,
    cache: RefCell<HashMap<ClockId, Arc<[u32]>>>,
}

impl<'a> Evaluator<'a> {
    pub fn new(run: &'a Run, defs: &'a DefSet) -> Self {
        Evaluator {
            run,
            defs,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn run(&self) -> &'a Run {
        self.run
    }

    /// Tick list of `expr` over the run.
    pub fn eval(&self, expr: &ClockExpr) -> Result<Arc<[u32]>, ExprError> {
        let mut visiting = Vec::new();
        self.eval_inner(expr, &mut visiting)
    }

    /// Tick list of a named clock (base, defined, or `ms`).
    pub fn eval_name(&self, name: &ClockId) -> Result<Arc<[u32]>, ExprError> {
        let mut visiting = Vec::new();
        self.resolve(name, &mut visiting)
    }

    fn eval_inner(
        &self,
        expr: &ClockExpr,
        visiting: &mut Vec<ClockId>,
    ) -> Result<Arc<[u32]>, ExprError> {
        match expr {
            ClockExpr::Clock(name) => self.resolve(name, visiting),
            ClockExpr::PeriodicOn { base, period } => {
                let base = self.eval_inner(base, visiting)?;
                Ok(eval_periodic_on(&base, *period)?.into())
            }
            ClockExpr::DelayFor {
                base,
                delay,
                reference,
            } => {
                let base = self.eval_inner(base, visiting)?;
                let reference = self.eval_inner(reference, visiting)?;
                Ok(eval_delay_for(&base, *delay, &reference).into())
            }
            ClockExpr::Inf(l, r) => {
                let l = self.eval_inner(l, visiting)?;
                let r = self.eval_inner(r, visiting)?;
                Ok(eval_infimum(&l, &r).into())
            }
            ClockExpr::Sup(l, r) => {
                let l = self.eval_inner(l, visiting)?;
                let r = self.eval_inner(r, visiting)?;
                Ok(eval_supremum(&l, &r).into())
            }
        }
    }

    fn resolve(
        &self,
        name: &ClockId,
        visiting: &mut Vec<ClockId>,
    ) -> Result<Arc<[u32]>, ExprError> {
        if let Some(hit) = self.cache.borrow().get(name) {
            return Ok(hit.clone());
        }
        let list: Arc<[u32]> = if name.as_str() == UNIVERSAL_CLOCK {
            (0..=self.run.last_step()).collect::<Vec<u32>>().into()
        } else if let Ok(list) = self.run.tick_list(name) {
            list.to_vec().into()
        } else if let Some(body) = self.defs.get(name) {
            if visiting.contains(name) {
                return Err(ExprError::CyclicDefinition {
                    clock: name.clone(),
                });
            }
            visiting.push(name.clone());
            let list = self.eval_inner(body, visiting)?;
            visiting.pop();
            list
        } else {
            return Err(ExprError::UnknownClock {
                clock: name.clone(),
            });
        };
        self.cache
            .borrow_mut()
            .insert(name.clone(), list.clone());
        Ok(list)
    }
}
