//! Round-trip guarantees of the JSONL trace format: reading back a written
//! run reproduces it exactly, and re-writing the read value reproduces the
//! bytes, so traces can be archived, diffed, and replayed.

use proptest::prelude::*;

use prccsl::trace::{read_jsonl, write_jsonl, ClockId, Run};

fn to_bytes(run: &Run) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(run, &mut buf).unwrap();
    buf
}

#[test]
fn write_read_write_is_byte_stable() {
    let run = Run::from_tick_lists(
        [
            (ClockId::new("fast"), vec![0, 1, 2, 5, 6]),
            (ClockId::new("slow"), vec![2, 6]),
            (ClockId::new("idle"), vec![]),
        ],
        7,
    )
    .unwrap();
    let first = to_bytes(&run);
    let reread = read_jsonl(first.as_slice()).unwrap();
    assert_eq!(reread, run);
    assert_eq!(to_bytes(&reread), first);
}

#[test]
fn header_line_carries_the_full_clock_list() {
    let run = Run::from_tick_lists(
        [
            (ClockId::new("a"), vec![0]),
            (ClockId::new("never"), vec![]),
        ],
        1,
    )
    .unwrap();
    let text = String::from_utf8(to_bytes(&run)).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.contains("\"never\""), "silent clocks stay declared: {header}");
    assert_eq!(text.lines().count(), 3, "header plus one line per step");
}

#[test]
fn truncated_files_are_rejected() {
    let run = Run::from_tick_lists([(ClockId::new("a"), vec![0, 2])], 3).unwrap();
    let bytes = to_bytes(&run);
    let text = String::from_utf8(bytes).unwrap();
    let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
    assert!(read_jsonl(cut.as_bytes()).is_err());
}

fn arbitrary_run() -> impl Strategy<Value = Run> {
    (1u32..40, 1usize..5).prop_flat_map(|(steps, nclocks)| {
        proptest::collection::vec(
            proptest::collection::btree_set(0..steps, 0..steps as usize),
            nclocks..=nclocks,
        )
        .prop_map(move |sets| {
            Run::from_tick_lists(
                sets.into_iter()
                    .enumerate()
                    .map(|(i, s)| (ClockId::new(format!("c{i}")), s.into_iter().collect::<Vec<_>>())),
                steps - 1,
            )
            .unwrap()
        })
    })
}

proptest! {
    #[test]
    fn random_runs_round_trip(run in arbitrary_run()) {
        let bytes = to_bytes(&run);
        let reread = read_jsonl(bytes.as_slice()).unwrap();
        prop_assert_eq!(&reread, &run);
        prop_assert_eq!(to_bytes(&reread), bytes);
    }

    /// The reader tolerates blank separator lines without changing the run.
    #[test]
    fn blank_lines_are_ignored(run in arbitrary_run()) {
        let text = String::from_utf8(to_bytes(&run)).unwrap();
        let padded: String = text.lines().map(|l| format!("{l}\n\n")).collect();
        prop_assert_eq!(read_jsonl(padded.as_bytes()).unwrap(), run);
    }
}
