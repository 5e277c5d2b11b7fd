//! Static checks on parsed spec files.
//!
//! Validation never mutates the spec; it returns a list of diagnostics, one
//! per problem found, so a front end can report them all at once. An empty
//! list means the spec is ready to evaluate.

use std::collections::{HashMap, HashSet};
use std::fmt;

use crate::expr::{ClockExpr, UNIVERSAL_CLOCK};
use crate::relations::Probability;
use crate::trace::ClockId;

use super::{MonitorRef, NamedQuery, Query, SpecFile, StateExpr};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    /// The statement the problem was found in ("clock x", "define y", or a
    /// constraint / query label).
    pub subject: String,
    pub message: String,
}

impl Diagnostic {
    fn new(subject: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            subject: subject.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.subject, self.message)
    }
}

const DEFAULT_DELTA: (u64, u64) = (1, 100);

pub fn validate_spec(spec: &SpecFile) -> Vec<Diagnostic> {
    let mut out = Vec::new();

    let mut declared: HashSet<&str> = HashSet::new();
    for clock in &spec.clocks {
        let name = clock.as_str();
        if name == UNIVERSAL_CLOCK {
            out.push(Diagnostic::new(
                format!("clock {name}"),
                "the universal clock is implicit and cannot be declared",
            ));
        } else if !declared.insert(name) {
            out.push(Diagnostic::new(
                format!("clock {name}"),
                "declared more than once",
            ));
        }
    }

    let mut defined: HashSet<&str> = HashSet::new();
    for (name, _) in spec.defs.iter() {
        let name = name.as_str();
        defined.insert(name);
        if name == UNIVERSAL_CLOCK {
            out.push(Diagnostic::new(
                format!("define {name}"),
                "the universal clock is implicit and cannot be redefined",
            ));
        } else if declared.contains(name) {
            out.push(Diagnostic::new(
                format!("define {name}"),
                "shadows a declared clock",
            ));
        }
    }

    let known = |name: &str| {
        name == UNIVERSAL_CLOCK || declared.contains(name) || defined.contains(name)
    };

    for (name, body) in spec.defs.iter() {
        check_expr(body, &format!("define {name}"), &known, &mut out);
    }
    check_def_cycles(spec, &mut out);

    let mut constraint_ids: HashMap<&str, ()> = HashMap::new();
    for c in &spec.constraints {
        if constraint_ids.insert(&c.id, ()).is_some() {
            out.push(Diagnostic::new(&c.id, "duplicate constraint label"));
        }
        for rel in c.item.relations() {
            check_expr(&rel.left, &c.id, &known, &mut out);
            check_expr(&rel.right, &c.id, &known, &mut out);
        }
        check_template_params(c, &mut out);
    }

    let mut query_ids: HashSet<&str> = HashSet::new();
    for q in &spec.queries {
        if !query_ids.insert(&q.id) {
            out.push(Diagnostic::new(&q.id, "duplicate query label"));
        }
        check_query(spec, q, &known, &mut out);
    }

    out
}

fn check_expr(
    expr: &ClockExpr,
    subject: &str,
    known: &impl Fn(&str) -> bool,
    out: &mut Vec<Diagnostic>,
) {
    match expr {
        ClockExpr::Clock(c) => {
            if !known(c.as_str()) {
                out.push(Diagnostic::new(subject, format!("unknown clock `{c}`")));
            }
        }
        ClockExpr::PeriodicOn { base, period } => {
            if *period == 0 {
                out.push(Diagnostic::new(subject, "period must be at least 1"));
            }
            check_expr(base, subject, known, out);
        }
        ClockExpr::DelayFor {
            base, reference, ..
        } => {
            check_expr(base, subject, known, out);
            check_expr(reference, subject, known, out);
        }
        ClockExpr::Inf(l, r) | ClockExpr::Sup(l, r) => {
            check_expr(l, subject, known, out);
            check_expr(r, subject, known, out);
        }
    }
}

fn check_def_cycles(spec: &SpecFile, out: &mut Vec<Diagnostic>) {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Visiting,
        Done,
    }

    fn visit(
        name: &str,
        spec: &SpecFile,
        marks: &mut HashMap<String, Mark>,
        out: &mut Vec<Diagnostic>,
    ) {
        match marks.get(name) {
            Some(Mark::Done) => return,
            Some(Mark::Visiting) => {
                out.push(Diagnostic::new(
                    format!("define {name}"),
                    "definition cycle",
                ));
                return;
            }
            None => {}
        }
        marks.insert(name.to_owned(), Mark::Visiting);
        if let Some(body) = spec.defs.get(&ClockId::new(name)) {
            for dep in body.referenced_clocks() {
                if spec.defs.get(&dep).is_some() {
                    visit(dep.as_str(), spec, marks, out);
                }
            }
        }
        marks.insert(name.to_owned(), Mark::Done);
    }

    let mut marks = HashMap::new();
    for (name, _) in spec.defs.iter() {
        visit(name.as_str(), spec, &mut marks, out);
    }
}

fn check_template_params(c: &super::NamedConstraint, out: &mut Vec<Diagnostic>) {
    use super::ConstraintTemplate as T;
    let t = match &c.item {
        super::ConstraintItem::Template(t) => t,
        super::ConstraintItem::Relation(_) => return,
    };
    // A zero period surfaces through the expanded relations; only
    // template-shape problems invisible after expansion are checked here.
    match t {
        T::Execution { lower, upper, .. } | T::EndToEnd {
            lower: Some(lower),
            upper,
            ..
        } if lower > upper => {
            out.push(Diagnostic::new(&c.id, "window lower bound exceeds upper"));
        }
        T::Synchronization { events, .. } if events.len() < 2 => {
            out.push(Diagnostic::new(
                &c.id,
                "synchronization needs at least two events",
            ));
        }
        _ => {}
    }
}

fn check_query(
    spec: &SpecFile,
    q: &NamedQuery,
    known: &impl Fn(&str) -> bool,
    out: &mut Vec<Diagnostic>,
) {
    let check_monitor = |m: &MonitorRef, out: &mut Vec<Diagnostic>| match m {
        MonitorRef::Constraint(label) => {
            if spec.constraint(label).is_none() {
                out.push(Diagnostic::new(
                    &q.id,
                    format!("no constraint labelled `{label}`"),
                ));
            }
        }
        MonitorRef::State { pred, .. } => check_pred(pred, &q.id, known, out),
    };
    let check_bound = |bound: u32, out: &mut Vec<Diagnostic>| {
        if bound == 0 {
            out.push(Diagnostic::new(&q.id, "bound must be at least 1"));
        }
    };
    let check_rate = |word: &str, p: &Probability, out: &mut Vec<Diagnostic>| {
        let v = p.ratio();
        if v.numer() == &0 || v >= num_rational::Ratio::new(1, 2) {
            out.push(Diagnostic::new(
                &q.id,
                format!("{word} must lie strictly between 0 and 0.5"),
            ));
        }
    };

    match &q.query {
        Query::Hypothesis {
            monitor,
            bound,
            prob,
            alpha,
            beta,
            delta,
        } => {
            check_monitor(monitor, out);
            check_bound(*bound, out);
            for (word, p) in [("alpha", alpha), ("beta", beta)] {
                if let Some(p) = p {
                    check_rate(word, p, out);
                }
            }
            let theta = prob
                .map(|p| p.ratio())
                .or_else(|| match monitor {
                    MonitorRef::Constraint(label) => {
                        spec.constraint(label).map(|c| c.item.prob().ratio())
                    }
                    MonitorRef::State { .. } => None,
                })
                .unwrap_or_else(|| super::default_probability().ratio());
            let delta = delta
                .map(|p| p.ratio())
                .unwrap_or_else(|| num_rational::Ratio::new(DEFAULT_DELTA.0, DEFAULT_DELTA.1));
            if theta <= delta {
                out.push(Diagnostic::new(
                    &q.id,
                    "indifference margin reaches probability 0",
                ));
            }
            if theta + delta >= num_rational::Ratio::from_integer(1) {
                out.push(Diagnostic::new(
                    &q.id,
                    "indifference margin reaches probability 1",
                ));
            }
        }
        Query::Estimate {
            monitor,
            bound,
            epsilon,
            alpha,
            ..
        } => {
            check_monitor(monitor, out);
            check_bound(*bound, out);
            if let Some(a) = alpha {
                check_rate("alpha", a, out);
            }
            if let Some(e) = epsilon {
                if e.ratio().numer() == &0 {
                    out.push(Diagnostic::new(&q.id, "epsilon must be positive"));
                }
            }
        }
        Query::Compare {
            left,
            left_bound,
            right,
            right_bound,
            ratio,
        } => {
            check_monitor(left, out);
            check_monitor(right, out);
            check_bound(*left_bound, out);
            check_bound(*right_bound, out);
            if ratio.numer() == &0 {
                out.push(Diagnostic::new(&q.id, "ratio must be positive"));
            }
        }
        Query::Expected {
            observable,
            bound,
            runs,
            ..
        } => {
            check_state(observable, &q.id, known, out);
            check_bound(*bound, out);
            if *runs < 2 {
                out.push(Diagnostic::new(
                    &q.id,
                    "estimating a mean needs at least two runs",
                ));
            }
        }
        Query::Simulate { runs, bound, watch } => {
            check_bound(*bound, out);
            if *runs == 0 {
                out.push(Diagnostic::new(&q.id, "runs must be at least 1"));
            }
            for w in watch {
                check_state(w, &q.id, known, out);
            }
        }
    }
}

fn check_pred(
    pred: &super::Pred,
    subject: &str,
    known: &impl Fn(&str) -> bool,
    out: &mut Vec<Diagnostic>,
) {
    match pred {
        super::Pred::Cmp { left, right, .. } => {
            check_state(left, subject, known, out);
            check_state(right, subject, known, out);
        }
        super::Pred::And(l, r) | super::Pred::Or(l, r) => {
            check_pred(l, subject, known, out);
            check_pred(r, subject, known, out);
        }
        super::Pred::Not(inner) => check_pred(inner, subject, known, out),
    }
}

fn check_state(
    e: &StateExpr,
    subject: &str,
    known: &impl Fn(&str) -> bool,
    out: &mut Vec<Diagnostic>,
) {
    let clock = match e {
        StateExpr::History(c) | StateExpr::Tick(c) | StateExpr::Interval(c) => c,
        StateExpr::Const(_) => return,
    };
    if !known(clock.as_str()) {
        out.push(Diagnostic::new(
            subject,
            format!("unknown clock `{clock}`"),
        ));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec::parse_spec;

    fn diagnostics(text: &str) -> Vec<String> {
        validate_spec(&parse_spec(text).unwrap())
            .into_iter()
            .map(|d| d.to_string())
            .collect()
    }

    #[test]
    fn clean_spec_has_no_diagnostics() {
        let text = "clock a, b\n\
                    define slow = periodicOn a period 3\n\
                    R1: slow causes b prob 0.9\n\
                    query hypothesis R1 bound 100\n";
        assert!(diagnostics(text).is_empty());
    }

    #[test]
    fn reserved_and_duplicate_names_are_reported() {
        let text = "clock a, a, ms\ndefine ms = a\n";
        let msgs = diagnostics(text);
        assert_eq!(msgs.len(), 3, "{msgs:?}");
        assert!(msgs.iter().any(|m| m.contains("more than once")));
        assert!(msgs.iter().any(|m| m.contains("cannot be declared")));
        assert!(msgs.iter().any(|m| m.contains("cannot be redefined")));
    }

    #[test]
    fn unknown_clocks_are_reported_per_statement() {
        let msgs = diagnostics("clock a\nR1: a causes ghost\n");
        assert_eq!(msgs, vec!["R1: unknown clock `ghost`"]);
    }

    #[test]
    fn definition_cycles_are_reported_once() {
        let text = "define x = inf(y, y)\ndefine y = periodicOn x period 2\n";
        let msgs = diagnostics(text);
        assert_eq!(msgs.iter().filter(|m| m.contains("cycle")).count(), 1);
    }

    #[test]
    fn bad_windows_and_zero_periods_are_reported() {
        let text = "clock s, e\n\
                    execution from s to e within [30, 20]\n\
                    periodic s period 0\n\
                    R3: s coincides periodicOn e period 0\n";
        let msgs = diagnostics(text);
        assert!(msgs.iter().any(|m| m.contains("lower bound exceeds")));
        assert_eq!(
            msgs.iter().filter(|m| m.contains("period must")).count(),
            2
        );
    }

    #[test]
    fn query_targets_must_exist() {
        let msgs = diagnostics("clock a\nquery hypothesis R9 bound 10\n");
        assert_eq!(msgs, vec!["Q1: no constraint labelled `R9`"]);
    }

    #[test]
    fn hypothesis_margin_must_fit_between_zero_and_one() {
        let text = "clock a, b\n\
                    R1: a causes b prob 1\n\
                    query hypothesis R1 bound 10\n\
                    query hypothesis R1 bound 10 prob 0.005\n";
        let msgs = diagnostics(text);
        assert!(msgs.iter().any(|m| m.contains("probability 1")));
        assert!(msgs.iter().any(|m| m.contains("probability 0")));
    }

    #[test]
    fn mean_queries_need_two_runs() {
        let msgs = diagnostics("clock a\nquery expect max interval(a) bound 10 runs 1\n");
        assert_eq!(msgs.len(), 1);
        assert!(msgs[0].contains("two runs"));
    }
}
