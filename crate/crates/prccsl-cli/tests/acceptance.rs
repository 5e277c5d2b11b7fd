//! Release gate: eight end-to-end checks, one printed PASS or FAIL line
//! each. Built without the libtest harness so the lines always reach the
//! terminal; any failure makes the whole target exit nonzero.

use std::any::Any;
use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde_json::Value;

use prccsl::expr::{eval_delay_for, eval_infimum, eval_periodic_on, eval_supremum};
use prccsl::relations::{check_relation, RelationKind};
use prccsl::smc::{estimate_probability, hypothesis_test, Decision, SmcError, SprtParams};
use prccsl::spec::{parse_spec, print_spec, IntervalMethod};
use prccsl::testgen::random_spec;

type Check = fn() -> Result<String, String>;

fn main() {
    // Failures surface through the FAIL line; the default hook would only
    // interleave noise between the criterion lines.
    panic::set_hook(Box::new(|_| {}));

    let checks: [(&str, Check); 8] = [
        ("relation checkers vs brute force", relations_against_brute_force),
        ("derived-clock evaluators vs oracles", expressions_against_oracles),
        ("sequential test calibration", sprt_calibration),
        ("estimator interval shape and coverage", estimator_interval_and_coverage),
        ("bundled model hypothesis queries", av_hypothesis_queries),
        ("bundled model expected-value query", av_expected_value),
        ("bit-identical simulation replay", simulate_determinism),
        ("parse and print are inverse", parse_print_identity),
    ];

    let mut failures = 0u32;
    for (number, (name, check)) in checks.iter().enumerate() {
        match panic::catch_unwind(*check).unwrap_or_else(|e| Err(panic_text(e))) {
            Ok(detail) => println!("criterion {} ({name}): PASS ({detail})", number + 1),
            Err(why) => {
                failures += 1;
                println!("criterion {} ({name}): FAIL ({why})", number + 1);
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} of 8 acceptance criteria failed");
        std::process::exit(1);
    }
}

fn panic_text(payload: Box<dyn Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panicked".into())
}

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn av_asset(name: &str) -> PathBuf {
    workspace_root().join("assets/av").join(name)
}

fn prccsl_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_prccsl"))
}

/// Per-step boolean view of one clock, the most literal reading possible.
type Table = Vec<bool>;

fn rewind_count(table: &Table, i: usize) -> usize {
    table[..i].iter().filter(|&&t| t).count()
}

fn brute_force(kind: RelationKind, left: &Table, right: &Table) -> bool {
    let steps = left.len();
    match kind {
        RelationKind::Subclock => (0..steps).all(|i| !left[i] || right[i]),
        RelationKind::Coincidence => left == right,
        RelationKind::Exclusion => (0..steps).all(|i| !(left[i] && right[i])),
        RelationKind::Causality => {
            (0..steps).all(|i| rewind_count(left, i) >= rewind_count(right, i))
        }
        RelationKind::Precedence => (0..steps).all(|i| {
            rewind_count(left, i) >= rewind_count(right, i)
                && (rewind_count(left, i) > rewind_count(right, i) || !right[i])
        }),
    }
}

fn tick_list(table: &Table) -> Vec<u32> {
    table
        .iter()
        .enumerate()
        .filter_map(|(i, &t)| t.then_some(i as u32))
        .collect()
}

const KINDS: [RelationKind; 5] = [
    RelationKind::Subclock,
    RelationKind::Coincidence,
    RelationKind::Exclusion,
    RelationKind::Causality,
    RelationKind::Precedence,
];

/// Every two-clock run of up to six steps, all five checkers against a
/// from-scratch re-evaluation. 4^6 = 4096 assignments at the full length.
fn relations_against_brute_force() -> Result<String, String> {
    let started = Instant::now();
    let mut six_step = 0u64;
    let mut compared = 0u64;
    for steps in 1..=6usize {
        for bits in 0..1u32 << (2 * steps) {
            let left: Table = (0..steps).map(|i| bits >> i & 1 == 1).collect();
            let right: Table = (0..steps).map(|i| bits >> (steps + i) & 1 == 1).collect();
            if steps == 6 {
                six_step += 1;
            }
            let (lt, rt) = (tick_list(&left), tick_list(&right));
            let last = (steps - 1) as u32;
            for kind in KINDS {
                compared += 1;
                if check_relation(kind, last, &lt, &rt) != brute_force(kind, &left, &right) {
                    return Err(format!("{kind:?} disagrees on {left:?} / {right:?}"));
                }
            }
        }
    }
    if six_step != 4096 {
        return Err(format!("expected 4096 six-step assignments, saw {six_step}"));
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(10) {
        return Err(format!("took {elapsed:.1?}, budget 10s"));
    }
    Ok(format!(
        "{compared} comparisons over 4096 six-step assignments in {elapsed:.1?}"
    ))
}

/// Infimum and supremum against the k-th-tick rule on random runs, plus the
/// two fixed cases with known answers: overlapping delay instances and a
/// period-50 filter over an every-step base.
fn expressions_against_oracles() -> Result<String, String> {
    let mut rng = ChaCha12Rng::seed_from_u64(99);
    for case in 0..10_000u32 {
        let steps = rng.gen_range(1..=20u32);
        let density = rng.gen_range(0.1..0.9);
        let a: Vec<u32> = (0..steps).filter(|_| rng.gen_bool(density)).collect();
        let b: Vec<u32> = (0..steps).filter(|_| rng.gen_bool(density)).collect();

        let common = a.len().min(b.len());
        let mut inf: Vec<u32> = a[..common]
            .iter()
            .zip(&b[..common])
            .map(|(&x, &y)| x.min(y))
            .collect();
        inf.extend_from_slice(if a.len() > common { &a[common..] } else { &b[common..] });
        let sup: Vec<u32> = a.iter().zip(&b).map(|(&x, &y)| x.max(y)).collect();

        if eval_infimum(&a, &b) != inf {
            return Err(format!("infimum mismatch on case {case}: {a:?} / {b:?}"));
        }
        if eval_supremum(&a, &b) != sup {
            return Err(format!("supremum mismatch on case {case}: {a:?} / {b:?}"));
        }
    }

    let overlap = eval_delay_for(&[0, 2], 3, &[1, 2, 4, 5, 6, 8]);
    if overlap != [4, 6] {
        return Err(format!(
            "two pending delay instances fired at {overlap:?}, wanted [4, 6]"
        ));
    }

    let every_step: Vec<u32> = (0..3000).collect();
    let periodic = eval_periodic_on(&every_step, 50).map_err(|e| e.to_string())?;
    if periodic.len() != 60 {
        return Err(format!(
            "period-50 filter over 3000 steps gave {} ticks, wanted 60",
            periodic.len()
        ));
    }

    Ok("10000 random inf/sup runs, both delay spawns fire, 60 period-50 ticks".into())
}

fn coin(p: f64, rep: u64) -> impl Fn(u64) -> Result<bool, SmcError> + Sync {
    move |i| {
        let mut rng = ChaCha12Rng::seed_from_u64(rep);
        rng.set_stream(i);
        Ok(rng.gen_bool(p))
    }
}

/// Clearly-good and clearly-bad Bernoulli sources around theta 0.95 must be
/// decided correctly in at least 190 of 200 repetitions each, fast.
fn sprt_calibration() -> Result<String, String> {
    let params = SprtParams::new(0.95, 0.05, 0.05, 0.01, 1_000).map_err(|e| e.to_string())?;
    let mut accepts = 0u32;
    let mut rejects = 0u32;
    let mut slowest = Duration::ZERO;
    for rep in 0..200u64 {
        let t = Instant::now();
        let good = hypothesis_test(coin(0.99, rep), &params).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());
        let t = Instant::now();
        let bad = hypothesis_test(coin(0.90, 1_000 + rep), &params).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed());
        if good.decision == Decision::Accept {
            accepts += 1;
        }
        if bad.decision == Decision::Reject {
            rejects += 1;
        }
    }
    if accepts < 190 {
        return Err(format!("p=0.99 accepted in only {accepts}/200 repetitions"));
    }
    if rejects < 190 {
        return Err(format!("p=0.90 rejected in only {rejects}/200 repetitions"));
    }
    if slowest >= Duration::from_secs(1) {
        return Err(format!("slowest repetition took {slowest:.1?}, budget 1s"));
    }
    Ok(format!(
        "{accepts}/200 accepts at p=0.99, {rejects}/200 rejects at p=0.90, slowest {slowest:.1?}"
    ))
}

/// All-success estimation pins the interval shape; random coins then check
/// the coverage floor at three true probabilities.
fn estimator_interval_and_coverage() -> Result<String, String> {
    let sure = estimate_probability(|_| Ok(true), 0.05, 0.05, IntervalMethod::ClopperPearson)
        .map_err(|e| e.to_string())?;
    if sure.lo < 0.90 || sure.hi != 1.0 {
        return Err(format!(
            "all-success interval [{:.4}, {:.4}], wanted lower >= 0.90 and upper exactly 1",
            sure.lo, sure.hi
        ));
    }

    // 200 repetitions at confidence 0.95: demand coverage within three
    // binomial standard deviations of the nominal count.
    let floor = 0.95 * 200.0 - 3.0 * (0.05f64 * 0.95 * 200.0).sqrt();
    let mut worst = u64::MAX;
    for &p in &[0.5, 0.9, 0.99] {
        let mut covered = 0u64;
        for rep in 0..200u64 {
            let seed = (p * 1_000.0) as u64 * 10_000 + rep;
            let est = estimate_probability(coin(p, seed), 0.05, 0.05, IntervalMethod::ClopperPearson)
                .map_err(|e| e.to_string())?;
            if est.lo <= p && p <= est.hi {
                covered += 1;
            }
        }
        if (covered as f64) < floor {
            return Err(format!(
                "interval covered p={p} in only {covered}/200 repetitions, floor {floor:.1}"
            ));
        }
        worst = worst.min(covered);
    }
    Ok(format!(
        "all-success interval [{:.4}, 1], worst coverage {worst}/200 against floor {floor:.1}",
        sure.lo
    ))
}

/// Runs one named query of the bundled spec against the bundled model
/// through the real binary and returns the parsed report.
fn check_query(query: &str, out: &Path) -> Result<Value, String> {
    let output = prccsl_bin()
        .arg("check")
        .arg("--spec")
        .arg(av_asset("av.prccsl"))
        .arg("--model")
        .arg(av_asset("av.model.json"))
        .args(["--query", query, "--seed", "42"])
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| format!("could not spawn the binary: {e}"))?;
    if !output.status.success() {
        return Err(format!(
            "{query} exited with {:?}: {}",
            output.status.code(),
            String::from_utf8_lossy(&output.stderr).trim()
        ));
    }
    let text = fs::read_to_string(out).map_err(|e| format!("reading {query} report: {e}"))?;
    serde_json::from_str(&text).map_err(|e| format!("{query} report is not JSON: {e}"))
}

/// The five shipped hypothesis queries must all come back Accept within the
/// run cap, together well inside five minutes.
fn av_hypothesis_queries() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let started = Instant::now();
    let mut total_runs = 0u64;
    for query in ["HT_R1", "HT_R2", "HT_R6", "HT_R9", "HT_R27"] {
        let report = check_query(query, &dir.path().join(format!("{query}.json")))?;
        let decision = report["decision"].as_str().unwrap_or("?");
        let runs = report["runs"].as_u64().unwrap_or(0);
        if decision != "Accept" {
            return Err(format!("{query} decided {decision} after {runs} runs"));
        }
        if runs > 1_000 {
            return Err(format!("{query} needed {runs} runs, cap 1000"));
        }
        total_runs += runs;
    }
    let elapsed = started.elapsed();
    if elapsed > Duration::from_secs(300) {
        return Err(format!("five queries took {elapsed:.1?}, budget 5min"));
    }
    Ok(format!(
        "R1 R2 R6 R9 R27 all Accept, {total_runs} runs total, {elapsed:.1?}"
    ))
}

/// The max inter-trigger gap of the camera is exactly 50 in every run, so
/// the mean is 50 with zero half-width, and the histogram accounts for all
/// 100 runs.
fn av_expected_value() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("ev.json");
    let report = check_query("EV_GAP", &out)?;
    let mean = report["mean"].as_f64().unwrap_or(f64::NAN);
    let half = report["half_width"].as_f64().unwrap_or(f64::NAN);
    let runs = report["runs"].as_u64().unwrap_or(0);
    if mean != 50.0 || half != 0.0 || runs != 100 {
        return Err(format!(
            "max gap came back {mean} +- {half} over {runs} runs, wanted exactly 50 +- 0 over 100"
        ));
    }
    let hist = out.with_extension("hist.csv");
    let csv = fs::read_to_string(&hist).map_err(|e| format!("histogram file missing: {e}"))?;
    let mut total = 0u64;
    for line in csv.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let count = line
            .rsplit(',')
            .next()
            .and_then(|c| c.parse::<u64>().ok())
            .ok_or_else(|| format!("bad histogram row: {line}"))?;
        total += count;
    }
    if total != 100 {
        return Err(format!("histogram bins sum to {total}, wanted 100"));
    }
    Ok("max inter-trigger gap 50 +- 0 over 100 runs, histogram bins sum to 100".into())
}

/// Identical (model, seed, runs, bound) must give byte-identical trace
/// files across repeat invocations and across worker counts.
fn simulate_determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let simulate = |sub: &str, jobs: &str| -> Result<PathBuf, String> {
        let out = dir.path().join(sub);
        let output = prccsl_bin()
            .arg("simulate")
            .arg("--model")
            .arg(av_asset("av.model.json"))
            .args(["--runs", "6", "--bound", "400", "--seed", "7", "--jobs", jobs])
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| format!("could not spawn the binary: {e}"))?;
        if !output.status.success() {
            return Err(format!(
                "simulate exited with {:?}: {}",
                output.status.code(),
                String::from_utf8_lossy(&output.stderr).trim()
            ));
        }
        Ok(out)
    };
    let first = simulate("first", "0")?;
    let repeat = simulate("repeat", "0")?;
    let serial = simulate("serial", "1")?;
    let wide = simulate("wide", "8")?;
    for i in 0..6 {
        let name = format!("run-{i:04}.jsonl");
        let base = fs::read(first.join(&name)).map_err(|e| e.to_string())?;
        for other in [&repeat, &serial, &wide] {
            let bytes = fs::read(other.join(&name)).map_err(|e| e.to_string())?;
            if bytes != base {
                return Err(format!("{name} differs between invocations"));
            }
        }
    }
    Ok("6 runs at bound 400 byte-identical across reruns and jobs 1 vs 8".into())
}

/// Parsing a printed spec must give back the same tree, both for the
/// shipped file and for generated well-formed ones.
fn parse_print_identity() -> Result<String, String> {
    let bundled = fs::read_to_string(av_asset("av.prccsl")).map_err(|e| e.to_string())?;
    let spec = parse_spec(&bundled).map_err(|e| format!("shipped file does not parse: {e}"))?;
    let printed = print_spec(&spec);
    match parse_spec(&printed) {
        Ok(back) if back == spec => {}
        Ok(_) => return Err("shipped file changes across print and reparse".into()),
        Err(e) => return Err(format!("printed shipped file does not parse: {e}")),
    }
    if print_spec(&spec) != printed {
        return Err("printing the shipped file twice differs".into());
    }

    let mut rng = ChaCha12Rng::seed_from_u64(4242);
    for case in 0..1_000u32 {
        let spec = random_spec(&mut rng);
        let printed = print_spec(&spec);
        match parse_spec(&printed) {
            Ok(back) if back == spec => {}
            Ok(_) => return Err(format!("generated spec {case} reparses differently")),
            Err(e) => return Err(format!("generated spec {case} does not reparse: {e}")),
        }
    }
    Ok("shipped file plus 1000 generated files survive print and reparse".into())
}
