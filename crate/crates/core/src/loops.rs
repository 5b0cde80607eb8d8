//! Cycle and loop detection over state/action sequences.
//!
//! A *cycle* is a span `[i, j]` with `s_i = s_j` whose states
//! `s_i .. s_{j-1}` are pairwise distinct (no nested sub-cycle); a single
//! action that leaves the state unchanged is a cycle of length 1. A *loop*
//! is a cycle that starts exactly where the previously registered cycle
//! ended and repeats it element-wise, states and actions alike. Loop
//! actions are the redundant ones; the first occurrence of a cycle is never
//! counted.
//!
//! Detection is a single left-to-right pass that remembers the last visit of
//! every state. Only cycles starting at or after the end of the registered
//! cycle replace the register, so a run like `A B A B A` counts the second
//! `A B A` as a repeat instead of being derailed by the overlapping `B A B`.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TideError};
use crate::model::{assign_state_ids, RunLog, StateIdentityConfig, Trajectory};

/// State-index span `[start, end]` with `s_start = s_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct CycleSpan {
    pub start: usize,
    pub end: usize,
}

impl CycleSpan {
    /// Number of actions inside the span.
    pub fn length(&self) -> usize {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LoopSpan {
    pub cycle: CycleSpan,
    pub repeats_prev: CycleSpan,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TrajectoryLoops {
    /// Every non-nested cycle, ordered by end index.
    pub cycles: Vec<CycleSpan>,
    pub loops: Vec<LoopSpan>,
    /// One entry per action; true inside an accepted loop.
    pub mask: Vec<bool>,
}

impl TrajectoryLoops {
    pub fn loop_action_count(&self) -> usize {
        self.loops.iter().map(|l| l.cycle.length()).sum()
    }
}

fn slices_equal(ids: &[usize], actions: &[&str], a: CycleSpan, b: CycleSpan) -> bool {
    a.length() == b.length()
        && ids[a.start..=a.end] == ids[b.start..=b.end]
        && actions[a.start..a.end] == actions[b.start..b.end]
}

/// Runs the detector on precomputed state identities.
///
/// `state_ids` has one more entry than `actions`.
pub fn detect_on_ids(state_ids: &[usize], actions: &[&str]) -> TrajectoryLoops {
    assert_eq!(
        state_ids.len(),
        actions.len() + 1,
        "a trajectory with T actions has T + 1 states"
    );
    let mut out = TrajectoryLoops {
        mask: vec![false; actions.len()],
        ..TrajectoryLoops::default()
    };
    let mut last_seen: HashMap<usize, usize> = HashMap::new();
    let mut registered: Option<CycleSpan> = None;
    let mut interior = HashSet::new();

    for (t, &id) in state_ids.iter().enumerate() {
        if let Some(&i) = last_seen.get(&id) {
            interior.clear();
            let nested = !state_ids[i..t].iter().all(|s| interior.insert(*s));
            if !nested {
                let cycle = CycleSpan { start: i, end: t };
                out.cycles.push(cycle);
                let registrable = registered.is_none_or(|prev| i >= prev.end);
                if registrable {
                    if let Some(prev) = registered {
                        if i == prev.end && slices_equal(state_ids, actions, cycle, prev) {
                            out.loops.push(LoopSpan {
                                cycle,
                                repeats_prev: prev,
                            });
                            out.mask[i..t].iter_mut().for_each(|m| *m = true);
                        }
                    }
                    registered = Some(cycle);
                }
            }
        }
        last_seen.insert(id, t);
    }
    out
}

pub fn detect_cycles_and_loops(traj: &Trajectory, cfg: &StateIdentityConfig) -> Result<TrajectoryLoops> {
    let ids = assign_state_ids(traj.states(), cfg)?;
    let actions: Vec<&str> = traj.actions().collect();
    Ok(detect_on_ids(&ids, &actions))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryLoopEntry {
    pub task_id: String,
    pub rollout_idx: u32,
    #[serde(flatten)]
    pub detection: TrajectoryLoops,
}

/// Run-level loop statistics, pooled over all actions of all trajectories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LoopReport {
    pub loop_ratio: f64,
    pub total_actions: usize,
    pub loop_action_count: usize,
    pub trajectories: Vec<TrajectoryLoopEntry>,
}

impl LoopReport {
    pub fn loops(&self) -> impl Iterator<Item = (&TrajectoryLoopEntry, &LoopSpan)> {
        self.trajectories
            .iter()
            .flat_map(|e| e.detection.loops.iter().map(move |l| (e, l)))
    }
}

/// Detects loops in every trajectory of `run` and pools the counts.
pub fn loop_ratio(run: &RunLog, cfg: &StateIdentityConfig) -> Result<LoopReport> {
    if run.trajectories.is_empty() {
        return Err(TideError::EmptyRun);
    }
    let trajectories = run
        .trajectories
        .par_iter()
        .map(|t| {
            Ok(TrajectoryLoopEntry {
                task_id: t.task_id.clone(),
                rollout_idx: t.rollout_idx,
                detection: detect_cycles_and_loops(t, cfg)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total_actions: usize = trajectories.iter().map(|e| e.detection.mask.len()).sum();
    if total_actions == 0 {
        return Err(TideError::NoActions);
    }
    let loop_action_count: usize = trajectories.iter().map(|e| e.detection.loop_action_count()).sum();
    Ok(LoopReport {
        loop_ratio: loop_action_count as f64 / total_actions as f64,
        total_actions,
        loop_action_count,
        trajectories,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionPattern {
    /// Literal prefix of the action text.
    Prefix(String),
    /// Regular expression anchored at the start of the action text.
    Regex(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRule {
    pub class: String,
    #[serde(flatten)]
    pub pattern: ActionPattern,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ClassifierFile {
    #[serde(default, rename = "rule")]
    rules: Vec<ClassRule>,
}

/// Maps action text to a class name.
///
/// With no rules, the class is the first whitespace-delimited token cut at
/// its first `(`, lowercased: `click(a)` and `CLICK [ok]` are both `click`.
/// With rules, the first matching rule wins and unmatched actions are `other`.
#[derive(Debug, Clone, Default)]
pub struct ActionClassifier {
    rules: Vec<(String, Matcher)>,
}

#[derive(Debug, Clone)]
enum Matcher {
    Prefix(String),
    Regex(Regex),
}

impl ActionClassifier {
    pub const UNMATCHED: &'static str = "other";

    pub fn new(rules: Vec<ClassRule>) -> Result<Self> {
        let rules = rules
            .into_iter()
            .map(|rule| {
                let matcher = match rule.pattern {
                    ActionPattern::Prefix(p) => Matcher::Prefix(p),
                    ActionPattern::Regex(r) => Matcher::Regex(
                        Regex::new(&format!("^(?:{r})"))
                            .map_err(|e| TideError::InvalidArgument(format!("bad action pattern `{r}`: {e}")))?,
                    ),
                };
                Ok((rule.class, matcher))
            })
            .collect::<Result<_>>()?;
        Ok(ActionClassifier { rules })
    }

    /// Reads rules from TOML: a list of `[[rule]]` tables with `class` and
    /// one of `prefix` or `regex`.
    pub fn from_toml(text: &str) -> Result<Self> {
        let file: ClassifierFile =
            toml::from_str(text).map_err(|e| TideError::InvalidArgument(format!("bad classifier file: {e}")))?;
        Self::new(file.rules)
    }

    pub fn classify(&self, action: &str) -> String {
        if self.rules.is_empty() {
            return leading_token(action);
        }
        self.rules
            .iter()
            .find(|(_, m)| match m {
                Matcher::Prefix(p) => action.starts_with(p.as_str()),
                Matcher::Regex(re) => re.is_match(action),
            })
            .map_or_else(|| Self::UNMATCHED.to_string(), |(class, _)| class.clone())
    }
}

fn leading_token(action: &str) -> String {
    let token = action.split_whitespace().next().unwrap_or("");
    let token = token.split('(').next().unwrap_or("");
    token.to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ActionClassRatios {
    pub ratios: BTreeMap<String, f64>,
    pub loop_action_total: usize,
    pub no_loops: bool,
}

/// Share of each action class among all loop actions of the run.
pub fn action_class_loop_ratio<F>(run: &RunLog, cfg: &StateIdentityConfig, classifier: F) -> Result<ActionClassRatios>
where
    F: Fn(&str) -> String,
{
    let report = loop_ratio(run, cfg)?;
    Ok(class_ratios_from_report(run, &report, classifier))
}

pub(crate) fn class_ratios_from_report<F>(run: &RunLog, report: &LoopReport, classifier: F) -> ActionClassRatios
where
    F: Fn(&str) -> String,
{
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for (traj, entry) in run.trajectories.iter().zip(&report.trajectories) {
        for (step, &in_loop) in traj.steps.iter().zip(&entry.detection.mask) {
            if in_loop {
                *counts.entry(classifier(&step.action)).or_default() += 1;
            }
        }
    }
    let total: usize = counts.values().sum();
    ActionClassRatios {
        ratios: counts
            .into_iter()
            .map(|(class, c)| (class, c as f64 / total as f64))
            .collect(),
        loop_action_total: total,
        no_loops: total == 0,
    }
}

/// Mean action entropy on loop steps versus non-loop steps. A side with no
/// steps has mean `None`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropySplit {
    pub mean_loop: Option<f64>,
    pub mean_nonloop: Option<f64>,
    pub n_loop: usize,
    pub n_nonloop: usize,
}

impl EntropySplit {
    pub fn has_empty_partition(&self) -> bool {
        self.n_loop == 0 || self.n_nonloop == 0
    }
}

pub fn entropy_split(run: &RunLog, cfg: &StateIdentityConfig) -> Result<EntropySplit> {
    for traj in &run.trajectories {
        if let Some(step) = traj.steps.iter().find(|s| s.entropy.is_none()) {
            return Err(TideError::MissingAnnotation {
                task_id: traj.task_id.clone(),
                rollout_idx: traj.rollout_idx,
                field: format!("steps[{}].entropy", step.turn),
            });
        }
    }
    let report = loop_ratio(run, cfg)?;
    Ok(entropy_split_from_report(run, &report))
}

pub(crate) fn entropy_split_from_report(run: &RunLog, report: &LoopReport) -> EntropySplit {
    let (mut sum_loop, mut n_loop, mut sum_other, mut n_other) = (0.0, 0, 0.0, 0);
    for (traj, entry) in run.trajectories.iter().zip(&report.trajectories) {
        for (step, &in_loop) in traj.steps.iter().zip(&entry.detection.mask) {
            let h = step.entropy.unwrap_or(0.0);
            if in_loop {
                sum_loop += h;
                n_loop += 1;
            } else {
                sum_other += h;
                n_other += 1;
            }
        }
    }
    let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);
    EntropySplit {
        mean_loop: mean(sum_loop, n_loop),
        mean_nonloop: mean(sum_other, n_other),
        n_loop,
        n_nonloop: n_other,
    }
}
