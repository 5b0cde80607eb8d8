//! Trajectory log data model.
//!
//! A [`RunLog`] is one model x environment x configuration evaluation run:
//! a header ([`RunMetadata`]) and a set of [`Trajectory`] rollouts. Every
//! [`Step`] carries the state observed *before* its action, and
//! `final_state` closes the sequence, so a trajectory with `T` actions has
//! `T + 1` states.

mod identity;
mod parse;
mod validate;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use identity::{assign_state_ids, states_equal, StateIdentityConfig};
pub use parse::{
    parse_run_log, parse_run_log_with, scan_run_log, write_run_log, LineFinding, ParseOptions, ScanOutcome,
};
pub use validate::{validate_run, Finding, ValidationReport};

/// Version tag of the line-delimited log schema read and written here.
pub const LOG_SCHEMA_VERSION: &str = "tide-log/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemoryMode {
    Full,
    None,
    Windowed(u32),
}

impl fmt::Display for MemoryMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemoryMode::Full => f.write_str("full"),
            MemoryMode::None => f.write_str("none"),
            MemoryMode::Windowed(k) => write!(f, "windowed:{k}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub run_id: String,
    #[serde(rename = "model")]
    pub model_name: String,
    #[serde(rename = "environment")]
    pub environment_name: String,
    pub memory_mode: MemoryMode,
    pub t_max: usize,
    #[serde(default)]
    pub extra: BTreeMap<String, String>,
    /// Top-level keys not part of the schema; kept so logs re-serialize intact.
    #[serde(flatten)]
    pub unknown_fields: BTreeMap<String, Value>,
}

/// Rendered environment state: exact text, or a precomputed embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum StateRepr {
    Text { value: String },
    Vector { values: Vec<f64> },
}

impl StateRepr {
    pub fn text(value: impl Into<String>) -> Self {
        StateRepr::Text { value: value.into() }
    }

    pub fn vector(values: Vec<f64>) -> Self {
        StateRepr::Vector { values }
    }

    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            StateRepr::Vector { values } => Some(values),
            StateRepr::Text { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub turn: usize,
    pub state: StateRepr,
    pub action: String,
    #[serde(default)]
    pub action_class: Option<String>,
    #[serde(default)]
    pub entropy: Option<f64>,
    #[serde(default)]
    pub observed_entities: Option<BTreeSet<String>>,
    #[serde(default)]
    pub interacted_entities: Option<BTreeSet<String>>,
}

impl Step {
    /// A bare step with no optional annotations.
    pub fn new(turn: usize, state: StateRepr, action: impl Into<String>) -> Self {
        Step {
            turn,
            state,
            action: action.into(),
            action_class: None,
            entropy: None,
            observed_entities: None,
            interacted_entities: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub task_id: String,
    pub rollout_idx: u32,
    pub success: bool,
    /// Turns elapsed when success first registered (1-based).
    #[serde(default)]
    pub success_turn: Option<usize>,
    #[serde(default)]
    pub target_entities: Option<BTreeSet<String>>,
    pub final_state: StateRepr,
    pub steps: Vec<Step>,
    #[serde(flatten)]
    pub unknown_fields: BTreeMap<String, Value>,
}

impl Trajectory {
    /// Number of actions taken.
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Full state sequence `[s_0, .., s_T]`.
    pub fn states(&self) -> impl Iterator<Item = &StateRepr> + '_ {
        self.steps
            .iter()
            .map(|s| &s.state)
            .chain(std::iter::once(&self.final_state))
    }

    pub fn actions(&self) -> impl Iterator<Item = &str> + '_ {
        self.steps.iter().map(|s| s.action.as_str())
    }

    /// Success turn if the task was solved within `t_max` turns.
    pub fn solved_within(&self, t_max: usize) -> Option<usize> {
        match (self.success, self.success_turn) {
            (true, Some(turn)) if turn <= t_max => Some(turn),
            _ => None,
        }
    }

    fn key(&self) -> (&str, u32) {
        (&self.task_id, self.rollout_idx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub metadata: RunMetadata,
    pub trajectories: Vec<Trajectory>,
}

impl RunLog {
    /// Sorts trajectories by `(task_id, rollout_idx)`.
    pub fn canonicalize(&mut self) {
        self.trajectories.sort_by(|a, b| a.key().cmp(&b.key()));
    }

    pub fn total_actions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }
}
