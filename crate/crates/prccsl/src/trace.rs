//! Runs, tick sets, and tick histories.
//!
//! A run is a finite sequence of steps. Step indices are 0-based and run
//! from 0 to `last_step` inclusive, so a run always contains at least one
//! step. At every step each clock either ticks or stays silent; the set of
//! clocks ticking at step `i` is the tick set `R(i)`.
//!
//! The history of a clock at step `i` is the number of times it has ticked
//! strictly before step `i`:
//!
//! ```text
//! H(0) = 0
//! H(i+1) = H(i) + 1   if the clock ticks at step i
//! H(i+1) = H(i)       otherwise
//! ```
//!
//! A tick at the final step is therefore visible in no in-range history
//! value; relation checks over histories treat it through tick indicators
//! only.
//!
//! Runs are immutable once built and safe to share across threads. The
//! internal representation is one sorted tick list per clock, which keeps
//! history queries at a binary search and makes ensemble evaluation cheap.

use std::collections::HashMap;
use std::fmt;
use std::io;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Name of a logical clock.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClockId(Arc<str>);

impl ClockId {
    pub fn new(name: impl AsRef<str>) -> Self {
        ClockId(Arc::from(name.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ClockId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ClockId {
    fn from(s: &str) -> Self {
        ClockId::new(s)
    }
}

impl From<String> for ClockId {
    fn from(s: String) -> Self {
        ClockId(Arc::from(s.into_boxed_str()))
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("step {step} is out of range, last step is {last_step}")]
    IndexOutOfRange { step: u32, last_step: u32 },
    #[error("tick list for clock `{clock}` is not strictly increasing")]
    NonMonotone { clock: ClockId },
    #[error("unknown clock `{clock}`")]
    UnknownClock { clock: ClockId },
    #[error("clock `{clock}` declared twice")]
    DuplicateClock { clock: ClockId },
    #[error("malformed trace at line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// An immutable run: a declared clock list plus one sorted tick list per
/// clock, over steps `0..=last_step`.
#[derive(Debug, Clone)]
pub struct Run {
    clocks: Vec<ClockId>,
    index: HashMap<ClockId, usize>,
    ticks: Vec<Vec<u32>>,
    last_step: u32,
}

impl PartialEq for Run {
    fn eq(&self, other: &Self) -> bool {
        self.last_step == other.last_step
            && self.clocks == other.clocks
            && self.ticks == other.ticks
    }
}

impl Eq for Run {}

impl Run {
    /// Builds a run from per-clock tick lists. Lists must be strictly
    /// increasing and every index must be at most `last_step`. Clock order
    /// is the iteration order, and is preserved by the trace format.
    pub fn from_tick_lists<I, L>(lists: I, last_step: u32) -> Result<Run, TraceError>
    where
        I: IntoIterator<Item = (ClockId, L)>,
        L: Into<Vec<u32>>,
    {
        let mut clocks = Vec::new();
        let mut index = HashMap::new();
        let mut ticks = Vec::new();
        for (clock, list) in lists {
            let list: Vec<u32> = list.into();
            if index.contains_key(&clock) {
                return Err(TraceError::DuplicateClock { clock });
            }
            if !list.windows(2).all(|w| w[0] < w[1]) {
                return Err(TraceError::NonMonotone { clock });
            }
            if let Some(&last) = list.last() {
                if last > last_step {
                    return Err(TraceError::IndexOutOfRange {
                        step: last,
                        last_step,
                    });
                }
            }
            index.insert(clock.clone(), clocks.len());
            clocks.push(clock);
            ticks.push(list);
        }
        Ok(Run {
            clocks,
            index,
            ticks,
            last_step,
        })
    }

    /// Largest valid step index. A run spans steps `0..=last_step`.
    pub fn last_step(&self) -> u32 {
        self.last_step
    }

    /// Number of steps in the run, `last_step + 1`.
    pub fn num_steps(&self) -> u64 {
        u64::from(self.last_step) + 1
    }

    /// Declared clocks, in declaration order.
    pub fn clocks(&self) -> &[ClockId] {
        &self.clocks
    }

    pub fn contains_clock(&self, clock: &ClockId) -> bool {
        self.index.contains_key(clock)
    }

    fn slot(&self, clock: &ClockId) -> Result<usize, TraceError> {
        self.index
            .get(clock)
            .copied()
            .ok_or_else(|| TraceError::UnknownClock {
                clock: clock.clone(),
            })
    }

    fn check_step(&self, step: u32) -> Result<(), TraceError> {
        if step > self.last_step {
            return Err(TraceError::IndexOutOfRange {
                step,
                last_step: self.last_step,
            });
        }
        Ok(())
    }

    /// Sorted step indices at which `clock` ticks.
    pub fn tick_list(&self, clock: &ClockId) -> Result<&[u32], TraceError> {
        Ok(&self.ticks[self.slot(clock)?])
    }

    /// Whether `clock` ticks at `step`.
    pub fn ticks_at(&self, clock: &ClockId, step: u32) -> Result<bool, TraceError> {
        self.check_step(step)?;
        let list = &self.ticks[self.slot(clock)?];
        Ok(list.binary_search(&step).is_ok())
    }

    /// Number of ticks of `clock` strictly before `step`.
    pub fn history(&self, clock: &ClockId, step: u32) -> Result<u32, TraceError> {
        self.check_step(step)?;
        let list = &self.ticks[self.slot(clock)?];
        Ok(list.partition_point(|&s| s < step) as u32)
    }

    /// Clocks ticking at `step`, in declaration order.
    pub fn ticking_at(&self, step: u32) -> Result<Vec<&ClockId>, TraceError> {
        self.check_step(step)?;
        Ok(self
            .clocks
            .iter()
            .enumerate()
            .filter(|(slot, _)| self.ticks[*slot].binary_search(&step).is_ok())
            .map(|(_, clock)| clock)
            .collect())
    }
}

/// Per-clock history values, materialized lazily per clock and memoized.
/// Semantically identical to [`Run::history`]; useful when a consumer reads
/// histories densely (trajectory exports, step walks).
pub struct HistoryTable<'r> {
    run: &'r Run,
    per_clock: Vec<OnceLock<Vec<u32>>>,
}

impl<'r> HistoryTable<'r> {
    pub fn new(run: &'r Run) -> Self {
        let per_clock = (0..run.clocks.len()).map(|_| OnceLock::new()).collect();
        HistoryTable { run, per_clock }
    }

    /// History values of `clock` for steps `0..=last_step`, in order.
    pub fn values(&self, clock: &ClockId) -> Result<&[u32], TraceError> {
        let slot = self.run.slot(clock)?;
        Ok(self.per_clock[slot].get_or_init(|| {
            let list = &self.run.ticks[slot];
            let steps = self.run.num_steps() as usize;
            let mut values = Vec::with_capacity(steps);
            let mut count = 0u32;
            for step in 0..steps as u64 {
                values.push(count);
                if list.binary_search(&(step as u32)).is_ok() {
                    count += 1;
                }
            }
            values
        }))
    }

    pub fn history(&self, clock: &ClockId, step: u32) -> Result<u32, TraceError> {
        self.run.check_step(step)?;
        Ok(self.values(clock)?[step as usize])
    }
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    n: u32,
    clocks: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct StepLine {
    step: u32,
    ticks: Vec<String>,
}

/// Writes a run in the line-oriented trace format: a header object carrying
/// `n` (the last step index) and the declared clock list, then one object
/// per step with the clocks ticking there, in declaration order.
pub fn write_jsonl<W: io::Write>(run: &Run, mut out: W) -> Result<(), TraceError> {
    let header = HeaderLine {
        n: run.last_step,
        clocks: run.clocks.iter().map(|c| c.as_str().to_owned()).collect(),
    };
    serde_json::to_writer(&mut out, &header).map_err(io::Error::from)?;
    out.write_all(b"\n")?;
    for step in 0..=run.last_step {
        let line = StepLine {
            step,
            ticks: run
                .ticking_at(step)
                .expect("step in range")
                .iter()
                .map(|c| c.as_str().to_owned())
                .collect(),
        };
        serde_json::to_writer(&mut out, &line).map_err(io::Error::from)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a run written by [`write_jsonl`]. Steps must appear exactly once
/// each, in order, and every ticking clock must be declared in the header.
pub fn read_jsonl<R: io::BufRead>(input: R) -> Result<Run, TraceError> {
    let mut lines = input.lines().enumerate();
    let header: HeaderLine = match lines.next() {
        Some((_, line)) => serde_json::from_str(&line?).map_err(|e| TraceError::Malformed {
            line: 1,
            msg: e.to_string(),
        })?,
        None => {
            return Err(TraceError::Malformed {
                line: 1,
                msg: "missing header".into(),
            })
        }
    };
    let clocks: Vec<ClockId> = header.clocks.iter().map(ClockId::new).collect();
    let mut slots: HashMap<&str, usize> = HashMap::new();
    for (i, c) in header.clocks.iter().enumerate() {
        if slots.insert(c.as_str(), i).is_some() {
            return Err(TraceError::DuplicateClock {
                clock: ClockId::new(c),
            });
        }
    }
    let mut ticks: Vec<Vec<u32>> = vec![Vec::new(); clocks.len()];
    let mut expected_step = 0u64;
    for (idx, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let parsed: StepLine =
            serde_json::from_str(&line).map_err(|e| TraceError::Malformed {
                line: lineno,
                msg: e.to_string(),
            })?;
        if u64::from(parsed.step) != expected_step || expected_step > u64::from(header.n) {
            return Err(TraceError::Malformed {
                line: lineno,
                msg: format!("expected step {expected_step}, found {}", parsed.step),
            });
        }
        for name in &parsed.ticks {
            let slot = *slots.get(name.as_str()).ok_or_else(|| TraceError::Malformed {
                line: lineno,
                msg: format!("clock `{name}` not declared in header"),
            })?;
            ticks[slot].push(parsed.step);
        }
        expected_step += 1;
    }
    if expected_step != u64::from(header.n) + 1 {
        return Err(TraceError::Malformed {
            line: 0,
            msg: format!(
                "expected {} step records, found {expected_step}",
                u64::from(header.n) + 1
            ),
        });
    }
    Run::from_tick_lists(clocks.into_iter().zip(ticks), header.n)
}
