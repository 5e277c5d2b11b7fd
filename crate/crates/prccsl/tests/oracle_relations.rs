//! Pits the production relation checkers against a deliberately naive
//! re-reading of the definitions. The naive side works on per-step boolean
//! tables and recounts histories from scratch at every step, so the two
//! implementations share no code and no cleverness.

use num_rational::Ratio;
use proptest::prelude::*;

use prccsl::relations::{
    check_relation, eval_prccsl, ratio_reaches, Probability, ProbRelation, RelationKind,
};
use prccsl::expr::{ClockExpr, DefSet};
use prccsl::trace::{ClockId, Run};

/// Ticks of one clock as a step-indexed table.
type Table = Vec<bool>;

/// Ticks strictly before step `i`, recounted from scratch.
fn naive_history(ticks: &Table, i: usize) -> usize {
    ticks[..i].iter().filter(|&&t| t).count()
}

fn naive_subclock(sub: &Table, sup: &Table) -> bool {
    sub.iter().zip(sup).all(|(&a, &b)| !a || b)
}

fn naive_coincidence(left: &Table, right: &Table) -> bool {
    left == right
}

fn naive_exclusion(left: &Table, right: &Table) -> bool {
    left.iter().zip(right).all(|(&a, &b)| !(a && b))
}

fn naive_causality(cause: &Table, effect: &Table) -> bool {
    (0..cause.len()).all(|i| naive_history(cause, i) >= naive_history(effect, i))
}

fn naive_precedence(left: &Table, right: &Table) -> bool {
    naive_causality(left, right)
        && (0..left.len()).all(|i| naive_history(left, i) > naive_history(right, i) || !right[i])
}

fn naive(kind: RelationKind, left: &Table, right: &Table) -> bool {
    match kind {
        RelationKind::Subclock => naive_subclock(left, right),
        RelationKind::Coincidence => naive_coincidence(left, right),
        RelationKind::Exclusion => naive_exclusion(left, right),
        RelationKind::Causality => naive_causality(left, right),
        RelationKind::Precedence => naive_precedence(left, right),
    }
}

const ALL_KINDS: [RelationKind; 5] = [
    RelationKind::Subclock,
    RelationKind::Coincidence,
    RelationKind::Exclusion,
    RelationKind::Causality,
    RelationKind::Precedence,
];

fn tick_list(table: &Table) -> Vec<u32> {
    table
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| t.then_some(i as u32))
        .collect()
}

/// Decodes `bits` into a tick table of `steps` entries.
fn table_from_bits(bits: u32, steps: usize) -> Table {
    (0..steps).map(|i| bits >> i & 1 == 1).collect()
}

#[test]
fn exhaustive_two_clocks_up_to_six_steps() {
    let mut six_step_assignments = 0u64;
    for steps in 1..=6usize {
        for bits in 0..1u32 << (2 * steps) {
            let left = table_from_bits(bits, steps);
            let right = table_from_bits(bits >> steps, steps);
            if steps == 6 {
                six_step_assignments += 1;
            }
            let (ll, rl) = (tick_list(&left), tick_list(&right));
            let last = (steps - 1) as u32;
            for kind in ALL_KINDS {
                assert_eq!(
                    check_relation(kind, last, &ll, &rl),
                    naive(kind, &left, &right),
                    "{kind:?} disagrees on left={left:?} right={right:?}"
                );
                assert_eq!(
                    check_relation(kind, last, &rl, &ll),
                    naive(kind, &right, &left),
                    "{kind:?} disagrees on swapped left={right:?} right={left:?}"
                );
            }
        }
    }
    assert_eq!(six_step_assignments, 4096);
}

fn table_pair(max_steps: usize) -> impl Strategy<Value = (Table, Table)> {
    (1..=max_steps).prop_flat_map(|steps| {
        (
            proptest::collection::vec(any::<bool>(), steps),
            proptest::collection::vec(any::<bool>(), steps),
        )
    })
}

proptest! {
    #[test]
    fn random_tables_agree_with_the_naive_reading((left, right) in table_pair(40)) {
        let (ll, rl) = (tick_list(&left), tick_list(&right));
        let last = (left.len() - 1) as u32;
        for kind in ALL_KINDS {
            prop_assert_eq!(check_relation(kind, last, &ll, &rl), naive(kind, &left, &right));
        }
    }

    #[test]
    fn precedence_implies_causality((left, right) in table_pair(30)) {
        let (ll, rl) = (tick_list(&left), tick_list(&right));
        let last = (left.len() - 1) as u32;
        if check_relation(RelationKind::Precedence, last, &ll, &rl) {
            prop_assert!(check_relation(RelationKind::Causality, last, &ll, &rl));
        }
    }

    #[test]
    fn coincidence_is_mutual_subclocking((left, right) in table_pair(30)) {
        let (ll, rl) = (tick_list(&left), tick_list(&right));
        let last = (left.len() - 1) as u32;
        let coincident = check_relation(RelationKind::Coincidence, last, &ll, &rl);
        let mutual = check_relation(RelationKind::Subclock, last, &ll, &rl)
            && check_relation(RelationKind::Subclock, last, &rl, &ll);
        prop_assert_eq!(coincident, mutual);
    }

    #[test]
    fn exclusion_is_symmetric((left, right) in table_pair(30)) {
        let (ll, rl) = (tick_list(&left), tick_list(&right));
        let last = (left.len() - 1) as u32;
        prop_assert_eq!(
            check_relation(RelationKind::Exclusion, last, &ll, &rl),
            check_relation(RelationKind::Exclusion, last, &rl, &ll)
        );
    }

    #[test]
    fn causality_and_subclocking_are_reflexive(table in proptest::collection::vec(any::<bool>(), 1..30)) {
        let list = tick_list(&table);
        let last = (table.len() - 1) as u32;
        prop_assert!(check_relation(RelationKind::Causality, last, &list, &list));
        prop_assert!(check_relation(RelationKind::Subclock, last, &list, &list));
    }
}

fn two_clock_run(left: &Table, right: &Table) -> Run {
    Run::from_tick_lists(
        [
            (ClockId::new("a"), tick_list(left)),
            (ClockId::new("b"), tick_list(right)),
        ],
        (left.len() - 1) as u32,
    )
    .expect("distinct clocks")
}

proptest! {
    /// The ensemble verdict counts runs, so reordering them changes nothing.
    #[test]
    fn ensemble_verdict_ignores_run_order(
        tables in proptest::collection::vec(table_pair(10), 1..20),
        rotation in 0usize..20,
    ) {
        let relation = ProbRelation {
            kind: RelationKind::Causality,
            left: ClockExpr::clock("a"),
            right: ClockExpr::clock("b"),
            prob: Probability::from_parts(1, 2).unwrap(),
        };
        let defs = DefSet::new();
        let runs: Vec<Run> = tables.iter().map(|(l, r)| two_clock_run(l, r)).collect();
        let mut rotated = runs.clone();
        let by = rotation % rotated.len();
        rotated.rotate_left(by);
        let straight = eval_prccsl(&relation, &defs, &runs).unwrap();
        let shuffled = eval_prccsl(&relation, &defs, &rotated).unwrap();
        prop_assert_eq!(straight, shuffled);
    }

    /// m/k >= p decided exactly: cross-multiplication agrees with wide
    /// rational arithmetic even where f64 would round.
    #[test]
    fn threshold_test_is_exact(m in 0u64..=1_000_000, k in 1u64..=1_000_000, num in 0u64..=99, den in 1u64..=100) {
        prop_assume!(m <= k);
        prop_assume!(num < den);
        let p = Probability::new(Ratio::new(num.max(1), den.max(num + 1))).unwrap();
        let expected = Ratio::new(m, k) >= p.ratio();
        prop_assert_eq!(ratio_reaches(m, k, p), expected);
    }
}

/// 19 of 20 runs exactly meets the default 0.95 threshold; 18 of 20 and
/// 189 of 199 fall short, however close the float value looks.
#[test]
fn default_threshold_boundary_is_sharp() {
    let p = Probability::from_parts(19, 20).unwrap();
    assert!(ratio_reaches(19, 20, p));
    assert!(!ratio_reaches(18, 20, p));
    assert!(ratio_reaches(19_000_000, 20_000_000, p));
    assert!(!ratio_reaches(18_999_999, 20_000_000, p));
}
