//! Command-line front end: validate specs, simulate models into trace
//! files, run queries (live or over recorded traces), and export the
//! bundled case study.
//!
//! Exit codes are fixed for CI use: 0 success or Accept, 1 I/O failure,
//! 2 bad input (malformed spec or model, unknown query, parameter
//! problems), 3 Reject, 4 Inconclusive.

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use prccsl::expr::DefSet;
use prccsl::monitor::{self, Monitor};
use prccsl::relations::{format_ratio, Probability};
use prccsl::sim::{ModelFile, Simulator};
use prccsl::smc::{
    self, CompareParams, Outcome, Report, SmcError, SprtParams, DEFAULT_ALPHA, DEFAULT_BETA,
    DEFAULT_DELTA, DEFAULT_EPSILON, DEFAULT_MAX_RUNS,
};
use prccsl::spec::{
    parse_spec, print_query, print_state_expr, validate_spec, IntervalMethod, Query, SpecFile,
};
use prccsl::trace::{read_jsonl, write_jsonl, Run};

const SEED_ENV: &str = "PRCCSL_SEED";
const DEFAULT_SEED: u64 = 42;

/// Statistical model checking of probabilistic clock-constraint specs.
#[derive(Parser)]
#[command(name = "prccsl", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a spec file and report diagnostics; exits 0 only when clean.
    Validate {
        /// Spec file to examine.
        #[arg(long)]
        spec: PathBuf,
    },
    /// Simulate a model into JSONL trace files.
    Simulate(SimulateArgs),
    /// Run one query from a spec and write a report.
    Check(CheckArgs),
    /// Write the bundled autonomous-vehicle case study files.
    Bundle {
        /// Destination directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SimulateArgs {
    /// Model file: JSON with `model` and `events`.
    #[arg(long)]
    model: PathBuf,
    /// How many runs to generate.
    #[arg(long)]
    runs: u64,
    /// Time horizon in steps; each run covers steps 0..=bound-1.
    #[arg(long)]
    bound: u32,
    /// Master seed. Defaults to $PRCCSL_SEED, then 42. Run `i` depends
    /// only on (seed, i).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 or omitted picks the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Directory for the run-NNNN.jsonl files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// Spec file holding the query.
    #[arg(long)]
    spec: PathBuf,
    /// Model to simulate. Exactly one of --model / --traces.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Directory of recorded .jsonl traces, consumed in filename order.
    #[arg(long)]
    traces: Option<PathBuf>,
    /// Label of the query to run.
    #[arg(long)]
    query: String,
    /// Run-count override: the cap for hypothesis and compare queries,
    /// the exact count for expect and simulate.
    #[arg(long)]
    runs: Option<u64>,
    /// Time-horizon override.
    #[arg(long)]
    bound: Option<u32>,
    /// Master seed for live simulation. Defaults to $PRCCSL_SEED, then 42.
    #[arg(long)]
    seed: Option<u64>,
    /// False-rejection bound (hypothesis, compare) or one minus the
    /// interval confidence (estimate).
    #[arg(long)]
    alpha: Option<f64>,
    /// False-acceptance bound (hypothesis, compare).
    #[arg(long)]
    beta: Option<f64>,
    /// Half-width of the hypothesis indifference band.
    #[arg(long)]
    delta: Option<f64>,
    /// Interval half-width target (estimate).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Worker threads; 0 or omitted picks the available parallelism.
    #[arg(long)]
    jobs: Option<usize>,
    /// Report file; stdout when omitted. An expect histogram lands next
    /// to it as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    /// Unreadable or unwritable files.
    Io(String),
    /// Malformed or inconsistent inputs and parameters.
    Input(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Input(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Input(m) => m,
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

fn input<E: std::fmt::Display>(e: E) -> Failure {
    Failure::Input(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.command.jobs() {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

impl Command {
    fn jobs(&self) -> Option<usize> {
        match self {
            Command::Simulate(a) => a.jobs,
            Command::Check(a) => a.jobs,
            _ => None,
        }
    }
}

fn dispatch(command: Command) -> CliResult<u8> {
    match command {
        Command::Validate { spec } => cmd_validate(&spec),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Check(args) => cmd_check(args),
        Command::Bundle { out } => {
            prccsl::av::write_bundle(&out).map_err(|e| io_failure(&out, e))?;
            println!("wrote av.model.json, av.prccsl, wcet.json to {}", out.display());
            Ok(0)
        }
    }
}

/// Read, parse, and fully validate a spec file.
fn load_spec(path: &Path) -> CliResult<SpecFile> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    let spec = parse_spec(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let diagnostics = validate_spec(&spec);
    if !diagnostics.is_empty() {
        let mut msg = format!("{}:", path.display());
        for d in &diagnostics {
            msg.push_str(&format!("\n  {d}"));
        }
        return Err(Failure::Input(msg));
    }
    Ok(spec)
}

fn load_model(path: &Path) -> CliResult<ModelFile> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

/// Recorded runs, in filename order.
fn load_traces(dir: &Path) -> CliResult<Vec<Run>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_failure(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Input(format!(
            "{}: no .jsonl traces found",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            let file = fs::File::open(p).map_err(|e| io_failure(p, e))?;
            read_jsonl(BufReader::new(file))
                .map_err(|e| Failure::Input(format!("{}: {e}", p.display())))
        })
        .collect()
}

fn resolve_seed(flag: Option<u64>) -> CliResult<u64> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match std::env::var(SEED_ENV) {
        Ok(text) => text.trim().parse().map_err(|_| {
            Failure::Input(format!("{SEED_ENV} must be an unsigned integer, got `{text}`"))
        }),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

fn cmd_validate(path: &Path) -> CliResult<u8> {
    let spec = load_spec(path)?;
    println!(
        "ok: {} clocks, {} definitions, {} constraints, {} queries",
        spec.clocks.len(),
        spec.defs.names().len(),
        spec.constraints.len(),
        spec.queries.len()
    );
    Ok(0)
}

fn cmd_simulate(args: SimulateArgs) -> CliResult<u8> {
    if args.runs == 0 {
        return Err(Failure::Input("--runs must be at least 1".into()));
    }
    let file = load_model(&args.model)?;
    let seed = resolve_seed(args.seed)?;
    let sim = Simulator::new(&file.model, &file.events, args.bound, seed).map_err(input)?;
    let outcomes = sim.batch(args.runs).map_err(input)?;
    fs::create_dir_all(&args.out).map_err(|e| io_failure(&args.out, e))?;
    for (i, outcome) in outcomes.iter().enumerate() {
        let path = args.out.join(format!("run-{i:04}.jsonl"));
        let mut buf = Vec::new();
        write_jsonl(&outcome.run, &mut buf).map_err(|e| io_failure(&path, e))?;
        fs::write(&path, buf).map_err(|e| io_failure(&path, e))?;
        if let Some(t) = outcome.deadlocked_at {
            println!("run {i:04} deadlocked at {t}");
        }
    }
    println!("wrote {} traces to {}", args.runs, args.out.display());
    Ok(0)
}

/// Where a check's runs come from.
enum Source {
    Live(ModelFile),
    Recorded(Vec<Run>),
}

impl Source {
    fn describe(&self, args: &CheckArgs) -> serde_json::Value {
        match self {
            Source::Live(_) => json!({ "model": args.model.as_ref().unwrap() }),
            Source::Recorded(runs) => json!({
                "traces": args.traces.as_ref().unwrap(),
                "available": runs.len(),
            }),
        }
    }
}

fn generator<E: std::fmt::Display>(e: E) -> SmcError {
    SmcError::Generator(e.to_string())
}

/// Per-run satisfaction of a monitor against live simulation.
fn live_sampler<'a>(
    sim: &'a Simulator<'a>,
    mon: &'a Monitor,
    defs: &'a DefSet,
    deadlocks: &'a AtomicU64,
) -> impl Fn(u64) -> Result<bool, SmcError> + Sync + 'a {
    move |i| {
        let outcome = sim.run(i).map_err(generator)?;
        if outcome.deadlocked_at.is_some() {
            deadlocks.fetch_add(1, Ordering::Relaxed);
        }
        mon.satisfied(&outcome.run, defs).map_err(generator)
    }
}

/// Per-run satisfaction over recorded traces; running out of traces is a
/// generator failure, never a silent truncation.
fn recorded_sampler<'a>(
    runs: &'a [Run],
    mon: &'a Monitor,
    defs: &'a DefSet,
) -> impl Fn(u64) -> Result<bool, SmcError> + Sync + 'a {
    move |i| {
        let run = runs.get(i as usize).ok_or_else(|| {
            generator(format!("recorded traces exhausted after {} runs", runs.len()))
        })?;
        mon.satisfied(run, defs).map_err(generator)
    }
}

fn prob_f64(p: Probability) -> f64 {
    let r = p.ratio();
    *r.numer() as f64 / *r.denom() as f64
}

fn opt_prob_f64(p: &Option<Probability>) -> Option<f64> {
    p.map(prob_f64)
}

/// Complains when a statistical flag was passed to a query kind it cannot
/// steer.
fn reject_flags(kind: &str, flags: &[(&str, bool)]) -> CliResult<()> {
    for (name, present) in flags {
        if *present {
            return Err(Failure::Input(format!(
                "--{name} does not apply to {kind} queries"
            )));
        }
    }
    Ok(())
}

fn cmd_check(args: CheckArgs) -> CliResult<u8> {
    let spec = load_spec(&args.spec)?;
    let named = spec
        .query(&args.query)
        .ok_or_else(|| {
            Failure::Input(format!(
                "{}: no query labelled `{}`",
                args.spec.display(),
                args.query
            ))
        })?
        .clone();
    let source = match (&args.model, &args.traces) {
        (Some(path), None) => Source::Live(load_model(path)?),
        (None, Some(dir)) => Source::Recorded(load_traces(dir)?),
        _ => {
            return Err(Failure::Input(
                "pass exactly one of --model or --traces".into(),
            ))
        }
    };
    let seed = resolve_seed(args.seed)?;
    let deadlocks = AtomicU64::new(0);
    let started = Instant::now();

    let (parameters, outcome) = match &named.query {
        Query::Hypothesis {
            monitor,
            bound,
            prob,
            alpha,
            beta,
            delta,
        } => {
            reject_flags("hypothesis", &[("epsilon", args.epsilon.is_some())])?;
            let mon = Monitor::from_ref(&spec, monitor).map_err(input)?;
            let theta = prob
                .or_else(|| monitor::declared_probability(&spec, monitor))
                .map(prob_f64)
                .unwrap_or_else(|| prob_f64(prccsl::spec::default_probability()));
            let alpha = args.alpha.or(opt_prob_f64(alpha)).unwrap_or(DEFAULT_ALPHA);
            let beta = args.beta.or(opt_prob_f64(beta)).unwrap_or(DEFAULT_BETA);
            let delta = args.delta.or(opt_prob_f64(delta)).unwrap_or(DEFAULT_DELTA);
            let max_runs = args.runs.unwrap_or(DEFAULT_MAX_RUNS);
            let params = SprtParams::new(theta, alpha, beta, delta, max_runs).map_err(input)?;
            let bound = args.bound.unwrap_or(*bound);
            let verdict = match &source {
                Source::Live(file) => {
                    let sim =
                        Simulator::new(&file.model, &file.events, bound, seed).map_err(input)?;
                    smc::hypothesis_test(
                        live_sampler(&sim, &mon, &spec.defs, &deadlocks),
                        &params,
                    )
                }
                Source::Recorded(runs) => {
                    smc::hypothesis_test(recorded_sampler(runs, &mon, &spec.defs), &params)
                }
            }
            .map_err(input)?;
            let parameters = json!({
                "source": source.describe(&args),
                "seed": seed,
                "bound": bound,
                "theta": theta,
                "alpha": alpha,
                "beta": beta,
                "delta": delta,
                "max_runs": max_runs,
            });
            let outcome = Outcome::Hypothesis {
                decision: verdict.decision,
                satisfied: verdict.satisfied,
                runs: verdict.runs_used,
            };
            (parameters, outcome)
        }
        Query::Estimate {
            monitor,
            bound,
            epsilon,
            alpha,
            method,
        } => {
            reject_flags(
                "estimate",
                &[
                    ("beta", args.beta.is_some()),
                    ("delta", args.delta.is_some()),
                    ("runs", args.runs.is_some()),
                ],
            )?;
            let mon = Monitor::from_ref(&spec, monitor).map_err(input)?;
            let epsilon = args
                .epsilon
                .or(opt_prob_f64(epsilon))
                .unwrap_or(DEFAULT_EPSILON);
            let alpha = args.alpha.or(opt_prob_f64(alpha)).unwrap_or(DEFAULT_ALPHA);
            let method = method.unwrap_or(IntervalMethod::ClopperPearson);
            let bound = args.bound.unwrap_or(*bound);
            let estimate = match &source {
                Source::Live(file) => {
                    let sim =
                        Simulator::new(&file.model, &file.events, bound, seed).map_err(input)?;
                    smc::estimate_probability(
                        live_sampler(&sim, &mon, &spec.defs, &deadlocks),
                        epsilon,
                        alpha,
                        method,
                    )
                }
                Source::Recorded(runs) => smc::estimate_probability(
                    recorded_sampler(runs, &mon, &spec.defs),
                    epsilon,
                    alpha,
                    method,
                ),
            }
            .map_err(input)?;
            let parameters = json!({
                "source": source.describe(&args),
                "seed": seed,
                "bound": bound,
                "epsilon": epsilon,
                "alpha": alpha,
                "method": match method {
                    IntervalMethod::ClopperPearson => "exact",
                    IntervalMethod::Normal => "normal",
                },
            });
            let outcome = Outcome::Estimate {
                satisfied: estimate.satisfied,
                runs: estimate.runs,
                point: format_ratio(estimate.point),
                interval: [estimate.lo, estimate.hi],
                confidence: estimate.confidence,
            };
            (parameters, outcome)
        }
        Query::Compare {
            left,
            left_bound,
            right,
            right_bound,
            ratio,
        } => {
            reject_flags(
                "compare",
                &[
                    ("delta", args.delta.is_some()),
                    ("epsilon", args.epsilon.is_some()),
                ],
            )?;
            let first = Monitor::from_ref(&spec, left).map_err(input)?;
            let second = Monitor::from_ref(&spec, right).map_err(input)?;
            let alpha = args.alpha.unwrap_or(DEFAULT_ALPHA);
            let beta = args.beta.unwrap_or(DEFAULT_BETA);
            let max_runs = args.runs.unwrap_or(DEFAULT_MAX_RUNS);
            let params = CompareParams::new(alpha, beta, max_runs).map_err(input)?;
            let ratio_value = *ratio.numer() as f64 / *ratio.denom() as f64;
            let (lb, rb) = (
                args.bound.unwrap_or(*left_bound),
                args.bound.unwrap_or(*right_bound),
            );
            let comparison = match &source {
                Source::Live(file) => {
                    let sim_l =
                        Simulator::new(&file.model, &file.events, lb, seed).map_err(input)?;
                    let sim_r =
                        Simulator::new(&file.model, &file.events, rb, seed).map_err(input)?;
                    smc::compare_probabilities(
                        live_sampler(&sim_l, &first, &spec.defs, &deadlocks),
                        live_sampler(&sim_r, &second, &spec.defs, &deadlocks),
                        ratio_value,
                        &params,
                    )
                }
                Source::Recorded(runs) => smc::compare_probabilities(
                    recorded_sampler(runs, &first, &spec.defs),
                    recorded_sampler(runs, &second, &spec.defs),
                    ratio_value,
                    &params,
                ),
            }
            .map_err(input)?;
            let parameters = json!({
                "source": source.describe(&args),
                "seed": seed,
                "left_bound": lb,
                "right_bound": rb,
                "ratio": format_ratio(*ratio),
                "alpha": alpha,
                "beta": beta,
                "max_runs": max_runs,
            });
            let outcome = Outcome::Compare {
                decision: comparison.decision,
                pairs: comparison.runs_used,
                first_satisfied: comparison.first_satisfied,
                second_satisfied: comparison.second_satisfied,
            };
            (parameters, outcome)
        }
        Query::Expected {
            mode,
            observable,
            bound,
            runs,
        } => {
            reject_flags(
                "expect",
                &[
                    ("alpha", args.alpha.is_some()),
                    ("beta", args.beta.is_some()),
                    ("delta", args.delta.is_some()),
                    ("epsilon", args.epsilon.is_some()),
                ],
            )?;
            let runs = args.runs.unwrap_or(u64::from(*runs));
            let bound = args.bound.unwrap_or(*bound);
            let mean = match &source {
                Source::Live(file) => {
                    let sim =
                        Simulator::new(&file.model, &file.events, bound, seed).map_err(input)?;
                    smc::expected_value(
                        |i| {
                            let outcome = sim.run(i).map_err(generator)?;
                            if outcome.deadlocked_at.is_some() {
                                deadlocks.fetch_add(1, Ordering::Relaxed);
                            }
                            monitor::extremum(*mode, observable, &outcome.run, &spec.defs)
                                .map_err(generator)
                        },
                        runs,
                    )
                }
                Source::Recorded(recorded) => smc::expected_value(
                    |i| {
                        let run = recorded.get(i as usize).ok_or_else(|| {
                            generator(format!(
                                "recorded traces exhausted after {} runs",
                                recorded.len()
                            ))
                        })?;
                        monitor::extremum(*mode, observable, run, &spec.defs).map_err(generator)
                    },
                    runs,
                ),
            }
            .map_err(input)?;
            let histogram_file = args.out.as_ref().map(|p| p.with_extension("hist.csv"));
            if let Some(path) = &histogram_file {
                fs::write(path, mean.histogram.to_csv()).map_err(|e| io_failure(path, e))?;
            }
            let parameters = json!({
                "source": source.describe(&args),
                "seed": seed,
                "bound": bound,
                "runs": runs,
                "observable": print_state_expr(observable),
            });
            let outcome = Outcome::Expected {
                mean: mean.mean,
                half_width: mean.half_width,
                runs: mean.runs,
                histogram: mean.histogram,
                histogram_file: histogram_file.map(|p| p.display().to_string()),
            };
            (parameters, outcome)
        }
        Query::Simulate { runs, bound, watch } => {
            reject_flags(
                "simulate",
                &[
                    ("alpha", args.alpha.is_some()),
                    ("beta", args.beta.is_some()),
                    ("delta", args.delta.is_some()),
                    ("epsilon", args.epsilon.is_some()),
                ],
            )?;
            let runs = args.runs.unwrap_or(u64::from(*runs));
            let bound = args.bound.unwrap_or(*bound);
            let trajectories = match &source {
                Source::Live(file) => {
                    let sim =
                        Simulator::new(&file.model, &file.events, bound, seed).map_err(input)?;
                    smc::monitor_simulations(
                        |i| {
                            let outcome = sim.run(i).map_err(generator)?;
                            if outcome.deadlocked_at.is_some() {
                                deadlocks.fetch_add(1, Ordering::Relaxed);
                            }
                            monitor::trajectory(watch, &outcome.run, &spec.defs).map_err(generator)
                        },
                        runs,
                    )
                }
                Source::Recorded(recorded) => smc::monitor_simulations(
                    |i| {
                        let run = recorded.get(i as usize).ok_or_else(|| {
                            generator(format!(
                                "recorded traces exhausted after {} runs",
                                recorded.len()
                            ))
                        })?;
                        monitor::trajectory(watch, run, &spec.defs).map_err(generator)
                    },
                    runs,
                ),
            }
            .map_err(input)?;
            let parameters = json!({
                "source": source.describe(&args),
                "seed": seed,
                "bound": bound,
                "runs": runs,
            });
            let outcome = Outcome::Simulate {
                runs,
                watch: watch.iter().map(print_state_expr).collect(),
                trajectories,
            };
            (parameters, outcome)
        }
    };

    let code = u8::try_from(outcome.exit_code()).expect("exit codes fit");
    let deadlocked = match &source {
        Source::Live(_) => Some(deadlocks.into_inner()),
        Source::Recorded(_) => None,
    };
    let report = Report {
        query: print_query(&named),
        parameters,
        outcome,
        deadlocked_runs: deadlocked,
        wall_clock_ms: u64::try_from(started.elapsed().as_millis()).unwrap_or(u64::MAX),
    };
    let text = serde_json::to_string_pretty(&report).expect("report serializes") + "\n";
    match &args.out {
        Some(path) => {
            fs::write(path, text).map_err(|e| io_failure(path, e))?;
            println!("{} → {}", summary(&report.outcome), path.display());
        }
        None => print!("{text}"),
    }
    Ok(code)
}

/// One-line human outcome for the terminal when the report goes to a file.
fn summary(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Hypothesis {
            decision,
            satisfied,
            runs,
        } => format!("{decision:?} ({satisfied}/{runs} runs satisfied)"),
        Outcome::Estimate {
            point, interval, ..
        } => format!("p ≈ {point} in [{:.4}, {:.4}]", interval[0], interval[1]),
        Outcome::Compare {
            decision, pairs, ..
        } => format!("{decision:?} ({pairs} pairs)"),
        Outcome::Expected {
            mean, half_width, ..
        } => format!("mean {mean} ± {half_width}"),
        Outcome::Simulate { runs, .. } => format!("{runs} runs traced"),
    }
}
