//! Statistical model checking for probabilistic clock constraints.
//!
//! The crate is organised bottom-up:
//!
//! * [`trace`]: discrete runs, tick lists, histories, and the JSONL trace
//!   format.
//! * [`expr`]: clock expressions (`periodicOn`, `delayFor`, `inf`, `sup`)
//!   evaluated against a run.
//! * [`relations`]: the five clock relations, checked per run and aggregated
//!   over an ensemble as an exact satisfaction ratio.
//! * [`spec`]: the constraint language (parser, printer, validator) and the
//!   requirement templates that expand into relations.
//!
//! Everything probability-shaped stays rational until a statistics routine
//! genuinely needs a float.

pub mod av;
pub mod expr;
pub mod monitor;
pub mod relations;
pub mod sim;
pub mod smc;
pub mod spec;
#[cfg(feature = "test-support")]
pub mod testgen;
pub mod trace;
