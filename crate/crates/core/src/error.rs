use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Category of a problem found while reading or validating a log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FindingCategory {
    /// The line is not a usable record at all (bad JSON, wrong record type).
    MalformedRecord,
    /// A field is missing or has the wrong type.
    SchemaViolation,
    /// The record is well-typed but breaks a domain invariant.
    InvariantViolation,
}

impl fmt::Display for FindingCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FindingCategory::MalformedRecord => "malformed-record",
            FindingCategory::SchemaViolation => "schema-violation",
            FindingCategory::InvariantViolation => "invariant-violation",
        })
    }
}

/// A located problem in a log file. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseError {
    pub line: usize,
    pub category: FindingCategory,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}: {}", self.line, self.category, self.message)
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Error)]
pub enum TideError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Parse(#[from] ParseError),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("run contains no trajectories")]
    EmptyRun,

    #[error("run contains no actions")]
    NoActions,

    #[error("no scores to resample")]
    EmptyScores,

    #[error("no input curves")]
    EmptyInput,

    #[error("missing annotation `{field}` on task {task_id} rollout {rollout_idx}")]
    MissingAnnotation {
        task_id: String,
        rollout_idx: u32,
        field: String,
    },

    #[error("vector dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("zero-norm vector under cosine state identity")]
    ZeroNormVector,

    #[error("cosine state identity requires vector states")]
    StateKindMismatch,

    #[error("curves have mismatched horizons: expected t_max {expected}, found {found}")]
    MismatchedHorizons { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("strict alignment violated: {0}")]
    StrictAlignmentViolation(String),

    #[error("paired runs share no task ids")]
    NoCommonTasks,

    #[error("duplicate run for model {model}, environment {environment}, memory mode {memory_mode}")]
    DuplicateRun {
        model: String,
        environment: String,
        memory_mode: String,
    },

    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),

    #[error("run {run_id}: {source}")]
    InRun {
        run_id: String,
        #[source]
        source: Box<TideError>,
    },
}

impl TideError {
    pub fn in_run(self, run_id: &str) -> TideError {
        TideError::InRun {
            run_id: run_id.to_string(),
            source: Box::new(self),
        }
    }

    /// Innermost error, looking through run annotations.
    pub fn root(&self) -> &TideError {
        match self {
            TideError::InRun { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = TideError> = std::result::Result<T, E>;
