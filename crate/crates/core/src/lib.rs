//! Post-hoc diagnostics for recorded multi-turn agent trajectories.
//!
//! The crate reads line-delimited JSON run logs ([`model`]) and computes:
//!
//! - success curves and Area Under Variation ([`auv`]),
//! - cycle/loop detection and the pooled Loop Ratio ([`loops`]),
//! - the Memory Index and memory recall lag ([`memory`]),
//! - cross-run comparison tables, radar profiles and curve exports ([`report`]).
//!
//! [`synth`] generates synthetic runs and holds the brute-force oracles the
//! test suites use to cross-check the metrics. [`cli`] is the `tide` binary.

pub mod auv;
pub mod cli;
pub mod error;
pub mod loops;
pub mod memory;
pub mod model;
pub mod report;
pub mod synth;

pub use error::{FindingCategory, ParseError, Result, TideError};
