//! Probabilistic clock relations over run ensembles.
//!
//! A relation `left ~ right` holds on a single run by the rules below,
//! where `H_x(i)` is the history of `x` at step `i` and the check ranges
//! over every step `i` of the run:
//!
//! * subclock: every step where `left` ticks, `right` ticks too.
//! * coincidence: mutual subclock (identical tick lists).
//! * exclusion: no step where both tick.
//! * causality (`left` causes `right`): `H_left(i) >= H_right(i)` at every
//!   step.
//! * precedence (`left` precedes `right`): causality, and additionally
//!   whenever the histories are equal at step `i`, `right` does not tick
//!   at `i`.
//!
//! A probabilistic relation holds on an ensemble of runs when the fraction
//! of runs satisfying it reaches the threshold. The comparison `m/k >= p`
//! is exact rational arithmetic; no float rounding can move a verdict
//! across the boundary.

use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use thiserror::Error;

use crate::expr::{ClockExpr, DefSet, Evaluator, ExprError};
use crate::trace::Run;

/// Parses a nonnegative rational written either as a decimal (`0.95`) or a
/// fraction (`19/20`). The value is exact; `0.95` is the rational 19/20.
pub fn parse_ratio(s: &str) -> Result<Ratio<u64>, String> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num: u64 = num.trim().parse().map_err(|_| bad(s))?;
        let den: u64 = den.trim().parse().map_err(|_| bad(s))?;
        if den == 0 {
            return Err(bad(s));
        }
        return Ok(Ratio::new(num, den));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad(s));
        }
        let whole: u64 = if whole.is_empty() {
            0
        } else {
            whole.parse().map_err(|_| bad(s))?
        };
        if frac.len() > 18 {
            return Err(bad(s));
        }
        let scale = 10u64.pow(frac.len() as u32);
        let frac_val: u64 = frac.parse().map_err(|_| bad(s))?;
        let num = whole
            .checked_mul(scale)
            .and_then(|w| w.checked_add(frac_val))
            .ok_or_else(|| bad(s))?;
        return Ok(Ratio::new(num, scale));
    }
    let whole: u64 = s.parse().map_err(|_| bad(s))?;
    Ok(Ratio::from_integer(whole))
}

fn bad(s: &str) -> String {
    format!("invalid rational `{s}`")
}

/// Formats a rational as an exact decimal when the reduced denominator has
/// only factors 2 and 5, and as `num/den` otherwise. The output reparses to
/// the same value.
pub fn format_ratio(r: Ratio<u64>) -> String {
    let num = *r.numer();
    let den = *r.denom();
    if den == 1 {
        return num.to_string();
    }
    let mut twos = 0u32;
    let mut fives = 0u32;
    let mut rest = den;
    while rest % 2 == 0 {
        rest /= 2;
        twos += 1;
    }
    while rest % 5 == 0 {
        rest /= 5;
        fives += 1;
    }
    if rest != 1 {
        return format!("{num}/{den}");
    }
    let digits = twos.max(fives);
    let scale = 10u64.pow(digits);
    // num/den == (num * (scale/den)) / scale, and scale/den is integral.
    let scaled = match num.checked_mul(scale / den) {
        Some(v) => v,
        None => return format!("{num}/{den}"),
    };
    let whole = scaled / scale;
    let frac = scaled % scale;
    let frac_str = format!("{frac:0width$}", width = digits as usize);
    let frac_str = frac_str.trim_end_matches('0');
    if frac_str.is_empty() {
        whole.to_string()
    } else {
        format!("{whole}.{frac_str}")
    }
}

/// A probability threshold in [0, 1], held as an exact rational.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Probability(Ratio<u64>);

impl Probability {
    pub fn new(value: Ratio<u64>) -> Result<Self, String> {
        if value > Ratio::from_integer(1) {
            return Err(format!("probability {value} exceeds 1"));
        }
        Ok(Probability(value))
    }

    pub fn from_parts(num: u64, den: u64) -> Result<Self, String> {
        if den == 0 {
            return Err("zero denominator".into());
        }
        Probability::new(Ratio::new(num, den))
    }

    pub fn ratio(self) -> Ratio<u64> {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        *self.0.numer() as f64 / *self.0.denom() as f64
    }
}

impl FromStr for Probability {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Probability::new(parse_ratio(s)?)
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_ratio(self.0))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RelationKind {
    Subclock,
    Coincidence,
    Exclusion,
    Causality,
    Precedence,
}

impl RelationKind {
    pub const ALL: [RelationKind; 5] = [
        RelationKind::Subclock,
        RelationKind::Coincidence,
        RelationKind::Exclusion,
        RelationKind::Causality,
        RelationKind::Precedence,
    ];
}

/// A probabilistic relation between two clock expressions.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbRelation {
    pub kind: RelationKind,
    pub left: ClockExpr,
    pub right: ClockExpr,
    pub prob: Probability,
}

#[derive(Debug, Error)]
pub enum RelationError {
    #[error("empty run ensemble")]
    EmptyEnsemble,
    #[error(transparent)]
    Expr(#[from] ExprError),
}

/// Every tick of `sub` is a tick of `sup`.
pub fn check_subclock(sub: &[u32], sup: &[u32]) -> bool {
    let mut j = 0;
    for &s in sub {
        while j < sup.len() && sup[j] < s {
            j += 1;
        }
        if j == sup.len() || sup[j] != s {
            return false;
        }
        j += 1;
    }
    true
}

pub fn check_coincidence(left: &[u32], right: &[u32]) -> bool {
    left == right
}

pub fn check_exclusion(left: &[u32], right: &[u32]) -> bool {
    let mut j = 0;
    for &s in left {
        while j < right.len() && right[j] < s {
            j += 1;
        }
        if j < right.len() && right[j] == s {
            return false;
        }
    }
    true
}

/// `H_cause(i) >= H_effect(i)` at every step of a run with last step
/// `last_step`. Ticks at the final step affect no in-range history value.
pub fn check_causality(last_step: u32, cause: &[u32], effect: &[u32]) -> bool {
    let mut hc = 0usize;
    let mut he = 0usize;
    for i in 0..=last_step {
        // hc and he are the histories at step i (ticks strictly before i).
        if hc < he {
            return false;
        }
        if hc < cause.len() && cause[hc] == i {
            hc += 1;
        }
        if he < effect.len() && effect[he] == i {
            he += 1;
        }
    }
    true
}

/// Causality plus: whenever the histories are equal at a step, the right
/// clock does not tick there.
pub fn check_precedence(last_step: u32, left: &[u32], right: &[u32]) -> bool {
    let mut hl = 0usize;
    let mut hr = 0usize;
    for i in 0..=last_step {
        // hl and hr are the histories at step i (ticks strictly before i).
        if hl < hr {
            return false;
        }
        let right_ticks = hr < right.len() && right[hr] == i;
        if hl == hr && right_ticks {
            return false;
        }
        if hl < left.len() && left[hl] == i {
            hl += 1;
        }
        if right_ticks {
            hr += 1;
        }
    }
    true
}

/// Whether the relation holds on a single run.
pub fn holds_in_run(
    run: &Run,
    defs: &DefSet,
    kind: RelationKind,
    left: &ClockExpr,
    right: &ClockExpr,
) -> Result<bool, ExprError> {
    let ev = Evaluator::new(run, defs);
    let l = ev.eval(left)?;
    let r = ev.eval(right)?;
    Ok(check_relation(kind, run.last_step(), &l, &r))
}

/// Dispatches on already-resolved tick lists.
pub fn check_relation(kind: RelationKind, last_step: u32, left: &[u32], right: &[u32]) -> bool {
    match kind {
        RelationKind::Subclock => check_subclock(left, right),
        RelationKind::Coincidence => check_coincidence(left, right),
        RelationKind::Exclusion => check_exclusion(left, right),
        RelationKind::Causality => check_causality(last_step, left, right),
        RelationKind::Precedence => check_precedence(last_step, left, right),
    }
}

/// Verdict of a probabilistic relation over a run ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EnsembleVerdict {
    /// Runs satisfying the relation.
    pub satisfied: u64,
    /// Runs evaluated.
    pub total: u64,
    /// Whether `satisfied / total >= threshold`, decided exactly.
    pub holds: bool,
}

impl EnsembleVerdict {
    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.satisfied, self.total)
    }
}

/// Exact test of `m / k >= p` using 128-bit cross multiplication.
pub fn ratio_reaches(satisfied: u64, total: u64, threshold: Probability) -> bool {
    let p = threshold.ratio();
    u128::from(satisfied) * u128::from(*p.denom()) >= u128::from(*p.numer()) * u128::from(total)
}

/// Evaluates a probabilistic relation over an ensemble of runs.
pub fn eval_prccsl(
    relation: &ProbRelation,
    defs: &DefSet,
    runs: &[Run],
) -> Result<EnsembleVerdict, RelationError> {
    if runs.is_empty() {
        return Err(RelationError::EmptyEnsemble);
    }
    let mut satisfied = 0u64;
    for run in runs {
        if holds_in_run(run, defs, relation.kind, &relation.left, &relation.right)? {
            satisfied += 1;
        }
    }
    let total = runs.len() as u64;
    Ok(EnsembleVerdict {
        satisfied,
        total,
        holds: ratio_reaches(satisfied, total, relation.prob),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trace::ClockId;

    #[test]
    fn subclock_examples() {
        assert!(check_subclock(&[1, 3], &[0, 1, 3]));
        assert!(!check_subclock(&[1, 2], &[1, 3]));
        assert!(check_subclock(&[], &[]));
    }

    #[test]
    fn coincidence_is_mutual_subclock() {
        assert!(check_coincidence(&[0, 2], &[0, 2]));
        assert!(!check_coincidence(&[0], &[0, 1]));
        assert!(check_coincidence(&[], &[]));
    }

    #[test]
    fn exclusion_examples() {
        assert!(check_exclusion(&[0, 2], &[1, 3]));
        assert!(!check_exclusion(&[0, 1], &[1, 3]));
        assert!(check_exclusion(&[], &[]));
    }

    #[test]
    fn causality_examples() {
        assert!(check_causality(2, &[0], &[1]));
        assert!(!check_causality(2, &[1], &[0]));
        assert!(check_causality(4, &[0, 2], &[0, 2]));
        assert!(check_causality(0, &[], &[]));
    }

    #[test]
    fn precedence_examples() {
        assert!(check_precedence(4, &[0, 2], &[1, 3]));
        // Equal histories at the step of the right clock's first tick.
        assert!(!check_precedence(4, &[0, 2], &[0, 2]));
        assert!(check_precedence(3, &[], &[]));
    }

    #[test]
    fn precedence_is_strict_at_equal_histories() {
        // Histories equal at step 2 and the right clock ticks there.
        assert!(!check_precedence(4, &[0, 1], &[0, 2]));
        // Right tick at a step where the left history is strictly ahead.
        assert!(check_precedence(4, &[0, 1], &[2, 3]));
    }

    fn coin_run(heads: bool) -> Run {
        let ticks: Vec<u32> = if heads { vec![0] } else { vec![] };
        Run::from_tick_lists(vec![(ClockId::new("a"), ticks), (ClockId::new("b"), vec![0])], 0)
            .unwrap()
    }

    fn subclock_ab(prob: &str) -> ProbRelation {
        ProbRelation {
            kind: RelationKind::Subclock,
            left: ClockExpr::clock("a"),
            right: ClockExpr::clock("b"),
            prob: prob.parse().unwrap(),
        }
    }

    #[test]
    fn ensemble_threshold_is_inclusive() {
        let defs = DefSet::new();
        let mut runs: Vec<Run> = (0..9).map(|_| coin_run(true)).collect();
        runs.push(coin_run(false));
        // 9 of 10 runs satisfy a <= b trivially; the tenth has no a-ticks,
        // which still satisfies subclock, so flip the relation instead.
        let rel = ProbRelation {
            kind: RelationKind::Coincidence,
            left: ClockExpr::clock("a"),
            right: ClockExpr::clock("b"),
            prob: "0.9".parse().unwrap(),
        };
        let verdict = eval_prccsl(&rel, &defs, &runs).unwrap();
        assert_eq!(verdict.satisfied, 9);
        assert_eq!(verdict.total, 10);
        assert!(verdict.holds);
    }

    #[test]
    fn ensemble_threshold_is_exact() {
        assert!(ratio_reaches(19, 20, "0.95".parse().unwrap()));
        assert!(!ratio_reaches(18, 20, "0.95".parse().unwrap()));
        assert!(ratio_reaches(3, 10, "0.3".parse().unwrap()));
        assert!(!ratio_reaches(2999999, 10000000, "0.3".parse().unwrap()));
    }

    #[test]
    fn empty_ensemble_is_an_error() {
        let defs = DefSet::new();
        assert!(matches!(
            eval_prccsl(&subclock_ab("0.5"), &defs, &[]),
            Err(RelationError::EmptyEnsemble)
        ));
    }

    #[test]
    fn ratio_parsing_and_formatting_round_trip() {
        for s in ["0.95", "19/20", "1", "0", "0.5", "1/3", "0.125", "2/7"] {
            let r = parse_ratio(s).unwrap();
            let printed = format_ratio(r);
            assert_eq!(parse_ratio(&printed).unwrap(), r, "{s} -> {printed}");
        }
        assert_eq!(format_ratio(Ratio::new(19, 20)), "0.95");
        assert_eq!(format_ratio(Ratio::new(1, 3)), "1/3");
        assert_eq!(format_ratio(Ratio::new(11, 10)), "1.1");
        assert!("1.2".parse::<Probability>().is_err());
    }
}
