//! Statistical verdict engine: sequential hypothesis testing, probability
//! estimation, paired comparison, mean estimation, and batch monitoring.
//!
//! Every routine consumes per-run outcomes through an indexed sampler
//! `Fn(u64) -> Result<_, SmcError>`, the fusion of a run generator and a
//! monitor. Outcomes are produced in parallel chunks but consumed strictly
//! in index order, so every verdict is a pure function of the sampler and
//! the parameters, independent of thread scheduling.

use num_rational::Ratio;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{Beta, ContinuousCDF, Normal, StudentsT};
use thiserror::Error;

use crate::spec::IntervalMethod;

/// Outcomes generated per parallel wave.
const CHUNK: u64 = 32;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_BETA: f64 = 0.05;
pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_EPSILON: f64 = 0.05;
pub const DEFAULT_MAX_RUNS: u64 = 1000;

#[derive(Debug, Error)]
pub enum SmcError {
    #[error("invalid parameters: {0}")]
    BadParams(String),
    #[error("run generation failed: {0}")]
    Generator(String),
    #[error("the denominator property never held in {runs} runs")]
    DegenerateDenominator { runs: u64 },
}

/// Wald SPRT configuration for testing H0: Pr >= theta against
/// H1: Pr < theta with an indifference band of half-width delta.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SprtParams {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    pub max_runs: u64,
}

impl SprtParams {
    pub fn new(
        theta: f64,
        alpha: f64,
        beta: f64,
        delta: f64,
        max_runs: u64,
    ) -> Result<SprtParams, SmcError> {
        let p = SprtParams {
            theta,
            alpha,
            beta,
            delta,
            max_runs,
        };
        if !(theta - delta > 0.0 && theta + delta < 1.0) {
            return Err(SmcError::BadParams(format!(
                "the indifference band [{}, {}] must stay strictly inside (0, 1)",
                theta - delta,
                theta + delta
            )));
        }
        if delta <= 0.0 {
            return Err(SmcError::BadParams("delta must be positive".into()));
        }
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v < 0.5) {
                return Err(SmcError::BadParams(format!(
                    "{name} must lie strictly between 0 and 0.5"
                )));
            }
        }
        if max_runs == 0 {
            return Err(SmcError::BadParams("max_runs must be at least 1".into()));
        }
        Ok(p)
    }

    /// Wald boundaries (A, B): the likelihood ratio accepts H1 at A and
    /// H0 at B.
    pub fn thresholds(&self) -> (f64, f64) {
        ((1.0 - self.beta) / self.alpha, self.beta / (1.0 - self.alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Decision {
    Accept,
    Reject,
    /// The run cap was reached inside the indifference band.
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Verdict {
    pub decision: Decision,
    pub runs_used: u64,
    pub satisfied: u64,
}

/// One parallel wave of outcomes, errors kept per index. Sequential tests
/// speculate a whole wave ahead; a failure there must only surface if the
/// in-order consumer reaches it while still undecided, otherwise a verdict
/// would depend on how far past it the wave happened to read.
fn chunked<T, F>(sample: &F, start: u64, stop: u64) -> Vec<Result<T, SmcError>>
where
    T: Send,
    F: Fn(u64) -> Result<T, SmcError> + Sync,
{
    (start..stop.min(start + CHUNK))
        .into_par_iter()
        .map(sample)
        .collect()
}

/// Sequential probability ratio test over Bernoulli run outcomes.
///
/// The likelihood ratio compares p1 = theta - delta against
/// p0 = theta + delta; satisfied runs push it down towards accepting H0,
/// failures push it up towards rejection. Hitting `max_runs` inside the
/// band yields `Inconclusive`, never a forced decision.
pub fn hypothesis_test<F>(sample: F, params: &SprtParams) -> Result<Verdict, SmcError>
where
    F: Fn(u64) -> Result<bool, SmcError> + Sync,
{
    let (a, b) = params.thresholds();
    let (ln_a, ln_b) = (a.ln(), b.ln());
    let p0 = params.theta + params.delta;
    let p1 = params.theta - params.delta;
    let w_success = (p1 / p0).ln();
    let w_failure = ((1.0 - p1) / (1.0 - p0)).ln();

    let mut llr = 0.0;
    let mut used = 0u64;
    let mut satisfied = 0u64;
    let mut next = 0u64;
    while next < params.max_runs {
        let wave = chunked(&sample, next, params.max_runs);
        next += wave.len() as u64;
        for outcome in wave {
            let ok = outcome?;
            used += 1;
            if ok {
                satisfied += 1;
                llr += w_success;
            } else {
                llr += w_failure;
            }
            if llr <= ln_b {
                return Ok(Verdict {
                    decision: Decision::Accept,
                    runs_used: used,
                    satisfied,
                });
            }
            if llr >= ln_a {
                return Ok(Verdict {
                    decision: Decision::Reject,
                    runs_used: used,
                    satisfied,
                });
            }
        }
    }
    Ok(Verdict {
        decision: Decision::Inconclusive,
        runs_used: used,
        satisfied,
    })
}

/// Runs needed so the empirical frequency is within `epsilon` of the truth
/// with probability `1 - alpha` (Chernoff-Hoeffding).
pub fn chernoff_runs(epsilon: f64, alpha: f64) -> Result<u64, SmcError> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(SmcError::BadParams("epsilon must lie in (0, 1)".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SmcError::BadParams("alpha must lie in (0, 1)".into()));
    }
    Ok(((2.0 / alpha).ln() / (2.0 * epsilon * epsilon)).ceil() as u64)
}

/// Exact binomial confidence interval at confidence `1 - alpha`.
///
/// The bounds are the beta-distribution quantiles; the boundary cases
/// m = 0 and m = k pin the interval to 0 and 1 respectively, which is why
/// this method, unlike the normal approximation, stays meaningful on
/// all-success ensembles.
pub fn clopper_pearson(satisfied: u64, runs: u64, alpha: f64) -> (f64, f64) {
    assert!(satisfied <= runs && runs > 0);
    let (m, k) = (satisfied as f64, runs as f64);
    let lo = if satisfied == 0 {
        0.0
    } else {
        Beta::new(m, k - m + 1.0)
            .expect("valid beta parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if satisfied == runs {
        1.0
    } else {
        Beta::new(m + 1.0, k - m)
            .expect("valid beta parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

fn normal_interval(satisfied: u64, runs: u64, alpha: f64) -> (f64, f64) {
    let p = satisfied as f64 / runs as f64;
    let z = Normal::standard().inverse_cdf(1.0 - alpha / 2.0);
    let half = z * (p * (1.0 - p) / runs as f64).sqrt();
    ((p - half).max(0.0), (p + half).min(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Estimate {
    pub satisfied: u64,
    pub runs: u64,
    /// Exactly satisfied/runs.
    #[serde(serialize_with = "serialize_ratio")]
    pub point: Ratio<u64>,
    pub lo: f64,
    pub hi: f64,
    pub confidence: f64,
}

fn serialize_ratio<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&crate::relations::format_ratio(*r))
}

/// Fixed-size probability estimation: the run count comes from
/// [`chernoff_runs`], the interval from Clopper-Pearson (or the normal
/// approximation on request).
pub fn estimate_probability<F>(
    sample: F,
    epsilon: f64,
    alpha: f64,
    method: IntervalMethod,
) -> Result<Estimate, SmcError>
where
    F: Fn(u64) -> Result<bool, SmcError> + Sync,
{
    let runs = chernoff_runs(epsilon, alpha)?;
    let outcomes: Vec<bool> = (0..runs).into_par_iter().map(&sample).collect::<Result<_, _>>()?;
    let satisfied = outcomes.iter().filter(|&&ok| ok).count() as u64;
    let (lo, hi) = match method {
        IntervalMethod::ClopperPearson => clopper_pearson(satisfied, runs, alpha),
        IntervalMethod::Normal => normal_interval(satisfied, runs, alpha),
    };
    Ok(Estimate {
        satisfied,
        runs,
        point: Ratio::new(satisfied.max(0), runs),
        lo,
        hi,
        confidence: 1.0 - alpha,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompareParams {
    pub alpha: f64,
    pub beta: f64,
    pub max_runs: u64,
}

impl CompareParams {
    pub fn new(alpha: f64, beta: f64, max_runs: u64) -> Result<CompareParams, SmcError> {
        for (name, v) in [("alpha", alpha), ("beta", beta)] {
            if !(v > 0.0 && v < 0.5) {
                return Err(SmcError::BadParams(format!(
                    "{name} must lie strictly between 0 and 0.5"
                )));
            }
        }
        if max_runs == 0 {
            return Err(SmcError::BadParams("max_runs must be at least 1".into()));
        }
        Ok(CompareParams {
            alpha,
            beta,
            max_runs,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Comparison {
    pub decision: Decision,
    /// Pairs consumed.
    pub runs_used: u64,
    pub first_satisfied: u64,
    pub second_satisfied: u64,
}

/// Paired sequential test of H0: odds(first)/odds(second) >= ratio against
/// H1: that ratio <= 1/ratio.
///
/// Both samplers are drawn at the same indices, and only discordant pairs
/// carry evidence: among them, the fraction favouring the first property
/// is ratio/(1+ratio) at the H0 boundary and 1/(1+ratio) at H1, reducing
/// the comparison to a Bernoulli SPRT. Concordant-only ensembles are
/// decided by the point ratio 1; a second property that never holds is a
/// [`SmcError::DegenerateDenominator`], whatever the likelihood says.
pub fn compare_probabilities<F1, F2>(
    first: F1,
    second: F2,
    ratio: f64,
    params: &CompareParams,
) -> Result<Comparison, SmcError>
where
    F1: Fn(u64) -> Result<bool, SmcError> + Sync,
    F2: Fn(u64) -> Result<bool, SmcError> + Sync,
{
    if !(ratio.is_finite() && ratio >= 1.0) {
        return Err(SmcError::BadParams(
            "comparison ratio must be at least 1; swap the operands to test below 1".into(),
        ));
    }
    let p0 = ratio / (1.0 + ratio);
    let p1 = 1.0 / (1.0 + ratio);
    let w_first = (p1 / p0).ln();
    let w_second = ((1.0 - p1) / (1.0 - p0)).ln();
    let a = ((1.0 - params.beta) / params.alpha).ln();
    let b = (params.beta / (1.0 - params.alpha)).ln();

    let mut llr = 0.0;
    let mut used = 0u64;
    let mut sat1 = 0u64;
    let mut sat2 = 0u64;
    let mut discordant = 0u64;
    let mut boundary = None;
    let mut next = 0u64;
    let pair = |j: u64| -> Result<(bool, bool), SmcError> { Ok((first(j)?, second(j)?)) };
    'outer: while next < params.max_runs {
        let wave = chunked(&pair, next, params.max_runs);
        next += wave.len() as u64;
        for outcome in wave {
            let (x1, x2) = outcome?;
            used += 1;
            sat1 += u64::from(x1);
            sat2 += u64::from(x2);
            if x1 != x2 {
                discordant += 1;
                llr += if x1 { w_first } else { w_second };
                if llr <= b {
                    boundary = Some(Decision::Accept);
                    break 'outer;
                }
                if llr >= a {
                    boundary = Some(Decision::Reject);
                    break 'outer;
                }
            }
        }
    }

    if sat2 == 0 {
        return Err(SmcError::DegenerateDenominator { runs: used });
    }
    let decision = match boundary {
        Some(d) => d,
        None if discordant == 0 => {
            // Identical outcomes throughout: the observed odds ratio is
            // exactly 1.
            if ratio > 1.0 {
                Decision::Reject
            } else {
                Decision::Accept
            }
        }
        None => Decision::Inconclusive,
    };
    Ok(Comparison {
        decision,
        runs_used: used,
        first_satisfied: sat1,
        second_satisfied: sat2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanEstimate {
    pub mean: f64,
    /// Student-t 95% confidence half-width; exactly 0 when every run
    /// observed the same value.
    pub half_width: f64,
    pub runs: u64,
    pub histogram: Histogram,
}

/// Equal-width frequency bins over the observed range. A degenerate range
/// is one bin of width 0. Counts always sum to the number of runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn build(values: &[i64]) -> Histogram {
        let min = *values.iter().min().unwrap();
        let max = *values.iter().max().unwrap();
        if min == max {
            return Histogram {
                lo: min as f64,
                width: 0.0,
                counts: vec![values.len() as u64],
            };
        }
        let bins = (values.len() as f64).sqrt().ceil() as usize;
        let width = (max - min) as f64 / bins as f64;
        let mut counts = vec![0u64; bins];
        for &v in values {
            let idx = (((v - min) as f64 / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        Histogram {
            lo: min as f64,
            width,
            counts,
        }
    }

    /// CSV rows `bin_lo,bin_hi,count`; the last bin includes its upper edge.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_lo,bin_hi,count\n");
        for (i, count) in self.counts.iter().enumerate() {
            let lo = self.lo + self.width * i as f64;
            let hi = self.lo + self.width * (i + 1) as f64;
            out.push_str(&format!("{lo},{hi},{count}\n"));
        }
        out
    }
}

/// Mean of a per-run scalar observable over a fixed number of runs, with a
/// Student-t 95% half-width and a frequency histogram of the samples.
pub fn expected_value<F>(observe: F, runs: u64) -> Result<MeanEstimate, SmcError>
where
    F: Fn(u64) -> Result<i64, SmcError> + Sync,
{
    if runs < 2 {
        return Err(SmcError::BadParams(
            "estimating a mean needs at least two runs".into(),
        ));
    }
    let values: Vec<i64> = (0..runs).into_par_iter().map(&observe).collect::<Result<_, _>>()?;
    let n = runs as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = values
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let half_width = if var == 0.0 {
        0.0
    } else {
        let t = StudentsT::new(0.0, 1.0, n - 1.0)
            .expect("valid t parameters")
            .inverse_cdf(0.975);
        t * (var / n).sqrt()
    };
    Ok(MeanEstimate {
        mean,
        half_width,
        runs,
        histogram: Histogram::build(&values),
    })
}

/// Per-run trajectories for a batch of monitored runs, in index order.
pub fn monitor_simulations<G>(trace: G, runs: u64) -> Result<Vec<Vec<Vec<i64>>>, SmcError>
where
    G: Fn(u64) -> Result<Vec<Vec<i64>>, SmcError> + Sync,
{
    (0..runs).into_par_iter().map(&trace).collect()
}

/// What a check writes next to its exit code: the canonical query text, an
/// echo of every effective parameter, the outcome, and timing.
#[derive(Debug, Serialize)]
pub struct Report {
    pub query: String,
    pub parameters: serde_json::Value,
    #[serde(flatten)]
    pub outcome: Outcome,
    /// Runs truncated by an expired invariant, when generated live.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub deadlocked_runs: Option<u64>,
    pub wall_clock_ms: u64,
}

#[derive(Debug, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Outcome {
    Hypothesis {
        decision: Decision,
        satisfied: u64,
        runs: u64,
    },
    Estimate {
        satisfied: u64,
        runs: u64,
        point: String,
        interval: [f64; 2],
        confidence: f64,
    },
    Compare {
        decision: Decision,
        pairs: u64,
        first_satisfied: u64,
        second_satisfied: u64,
    },
    Expected {
        mean: f64,
        half_width: f64,
        runs: u64,
        histogram: Histogram,
        #[serde(skip_serializing_if = "Option::is_none")]
        histogram_file: Option<String>,
    },
    Simulate {
        runs: u64,
        watch: Vec<String>,
        /// `trajectories[run][step][w]` is watch expression `w` at a step.
        trajectories: Vec<Vec<Vec<i64>>>,
    },
}

impl Outcome {
    /// The process exit code a check should end with.
    pub fn exit_code(&self) -> i32 {
        let decision = match self {
            Outcome::Hypothesis { decision, .. } => decision,
            Outcome::Compare { decision, .. } => decision,
            _ => return 0,
        };
        match decision {
            Decision::Accept => 0,
            Decision::Reject => 3,
            Decision::Inconclusive => 4,
        }
    }
}
