//! Memory Index and memory recall lag.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::auv::{auv_trapezoid, build_success_curve};
use crate::error::{Result, TideError};
use crate::model::{RunLog, Trajectory};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alignment {
    /// Both runs must cover the same tasks with the same rollout counts.
    #[default]
    Strict,
    /// Restrict both runs to their common task ids.
    Intersect,
}

impl std::str::FromStr for Alignment {
    type Err = TideError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(Alignment::Strict),
            "intersect" => Ok(Alignment::Intersect),
            other => Err(TideError::InvalidArgument(format!(
                "alignment must be `strict` or `intersect`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PairedRuns<'a> {
    pub with_memory: &'a RunLog,
    pub without_memory: &'a RunLog,
    pub alignment: Alignment,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryIndexResult {
    pub mi: f64,
    pub auv_with: f64,
    pub auv_without: f64,
    pub n_common_tasks: usize,
    /// Task ids dropped by intersect alignment, as `(run_id, task_id)`.
    pub excluded: Vec<(String, String)>,
}

fn rollouts_per_task(run: &RunLog) -> BTreeMap<&str, usize> {
    let mut counts = BTreeMap::new();
    for t in &run.trajectories {
        *counts.entry(t.task_id.as_str()).or_default() += 1;
    }
    counts
}

fn restrict(run: &RunLog, keep: &BTreeSet<&str>) -> RunLog {
    RunLog {
        metadata: run.metadata.clone(),
        trajectories: run
            .trajectories
            .iter()
            .filter(|t| keep.contains(t.task_id.as_str()))
            .cloned()
            .collect(),
    }
}

/// `AUV(with memory) - AUV(without memory)` over aligned task sets.
pub fn memory_index(pair: &PairedRuns<'_>, t_max: usize) -> Result<MemoryIndexResult> {
    let with_counts = rollouts_per_task(pair.with_memory);
    let without_counts = rollouts_per_task(pair.without_memory);
    let common: BTreeSet<&str> = with_counts
        .keys()
        .filter(|k| without_counts.contains_key(*k))
        .copied()
        .collect();

    let mut excluded = Vec::new();
    match pair.alignment {
        Alignment::Strict => {
            if with_counts != without_counts {
                let only_with = with_counts.keys().find(|k| !without_counts.contains_key(*k));
                let only_without = without_counts.keys().find(|k| !with_counts.contains_key(*k));
                let detail = match (only_with, only_without) {
                    (Some(t), _) => format!("task `{t}` only in {}", pair.with_memory.metadata.run_id),
                    (_, Some(t)) => format!("task `{t}` only in {}", pair.without_memory.metadata.run_id),
                    _ => "rollout counts per task differ".to_string(),
                };
                return Err(TideError::StrictAlignmentViolation(detail));
            }
        }
        Alignment::Intersect => {
            for run in [pair.with_memory, pair.without_memory] {
                let dropped: BTreeSet<&str> = run
                    .trajectories
                    .iter()
                    .map(|t| t.task_id.as_str())
                    .filter(|k| !common.contains(k))
                    .collect();
                for task in dropped {
                    log::warn!(
                        "{}: excluding task {task} absent from the paired run",
                        run.metadata.run_id
                    );
                    excluded.push((run.metadata.run_id.clone(), task.to_string()));
                }
            }
        }
    }
    if common.is_empty() {
        return Err(TideError::NoCommonTasks);
    }

    let with_run = restrict(pair.with_memory, &common);
    let without_run = restrict(pair.without_memory, &common);
    let auv_with = auv_trapezoid(&build_success_curve(&with_run, t_max)?);
    let auv_without = auv_trapezoid(&build_success_curve(&without_run, t_max)?);
    Ok(MemoryIndexResult {
        mi: auv_with - auv_without,
        auv_with,
        auv_without,
        n_common_tasks: common.len(),
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Success,
    Fail,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecallLagDistribution {
    pub cohort: Cohort,
    /// Lags in emission order: trajectory, then step, then object name.
    pub lags: Vec<usize>,
    /// `None` when no (step, object) pair qualified.
    pub mean: Option<f64>,
}

impl RecallLagDistribution {
    fn new(cohort: Cohort, lags: Vec<usize>) -> Self {
        let mean = (!lags.is_empty()).then(|| lags.iter().sum::<usize>() as f64 / lags.len() as f64);
        RecallLagDistribution { cohort, lags, mean }
    }

    /// Unit-width integer histogram: lag -> count.
    pub fn histogram(&self) -> BTreeMap<usize, usize> {
        let mut bins = BTreeMap::new();
        for &lag in &self.lags {
            *bins.entry(lag).or_default() += 1;
        }
        bins
    }
}

fn missing(traj: &Trajectory, field: String) -> TideError {
    TideError::MissingAnnotation {
        task_id: traj.task_id.clone(),
        rollout_idx: traj.rollout_idx,
        field,
    }
}

fn trimmed(set: &BTreeSet<String>) -> BTreeSet<&str> {
    set.iter().map(|s| s.trim()).collect()
}

/// Lags between the most recent earlier observation of a target object and
/// each interaction with it. Interactions with targets never observed
/// before are skipped.
pub fn trajectory_recall_lags(traj: &Trajectory) -> Result<Vec<usize>> {
    let targets = traj
        .target_entities
        .as_ref()
        .ok_or_else(|| missing(traj, "target_entities".into()))?;
    let targets = trimmed(targets);
    let mut last_seen: HashMap<&str, usize> = HashMap::new();
    let mut lags = Vec::new();
    for (t, step) in traj.steps.iter().enumerate() {
        let observed = step
            .observed_entities
            .as_ref()
            .ok_or_else(|| missing(traj, format!("steps[{t}].observed_entities")))?;
        let interacted = step
            .interacted_entities
            .as_ref()
            .ok_or_else(|| missing(traj, format!("steps[{t}].interacted_entities")))?;
        for obj in trimmed(interacted) {
            if targets.contains(obj) {
                if let Some(k) = last_seen.get(obj) {
                    lags.push(t - k);
                }
            }
        }
        // observations at step t only count for later interactions
        for obj in observed {
            last_seen.insert(obj.trim(), t);
        }
    }
    Ok(lags)
}

/// Recall-lag distributions for the run: `[all]`, or `[success, fail, all]`
/// when `cohort_split` is set.
pub fn recall_lag(run: &RunLog, cohort_split: bool) -> Result<Vec<RecallLagDistribution>> {
    let per_traj = run
        .trajectories
        .iter()
        .map(|t| Ok((t.success, trajectory_recall_lags(t)?)))
        .collect::<Result<Vec<_>>>()?;
    let collect = |keep: &dyn Fn(bool) -> bool| -> Vec<usize> {
        per_traj
            .iter()
            .filter(|(success, _)| keep(*success))
            .flat_map(|(_, lags)| lags.iter().copied())
            .collect()
    };
    let all = RecallLagDistribution::new(Cohort::All, collect(&|_| true));
    if !cohort_split {
        return Ok(vec![all]);
    }
    Ok(vec![
        RecallLagDistribution::new(Cohort::Success, collect(&|s| s)),
        RecallLagDistribution::new(Cohort::Fail, collect(&|s| !s)),
        all,
    ])
}
