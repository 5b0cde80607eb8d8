use std::collections::HashMap;

use serde::Serialize;

use super::{MemoryMode, RunLog, RunMetadata, StateRepr, Trajectory};

/// One broken invariant, located by trajectory and field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub task_id: Option<String>,
    pub rollout_idx: Option<u32>,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.findings.is_empty()
    }
}

pub(crate) type FieldIssue = (String, String);

pub(crate) fn check_metadata(meta: &RunMetadata) -> Vec<FieldIssue> {
    let mut issues = Vec::new();
    if meta.run_id.is_empty() {
        issues.push(("run_id".into(), "run_id must be nonempty".into()));
    }
    if meta.t_max == 0 {
        issues.push(("t_max".into(), "t_max must be at least 1".into()));
    }
    if meta.memory_mode == MemoryMode::Windowed(0) {
        issues.push(("memory_mode".into(), "window size must be positive".into()));
    }
    issues
}

fn check_state(state: &StateRepr, field: &str, issues: &mut Vec<FieldIssue>) {
    if let StateRepr::Vector { values } = state {
        if values.is_empty() {
            issues.push((field.into(), "vector state must be nonempty".into()));
        } else if values.iter().any(|x| !x.is_finite()) {
            issues.push((field.into(), "vector state contains non-finite values".into()));
        }
    }
}

pub(crate) fn check_trajectory(traj: &Trajectory) -> Vec<FieldIssue> {
    let mut issues = Vec::new();
    for (idx, step) in traj.steps.iter().enumerate() {
        if step.turn != idx {
            issues.push((
                format!("steps[{idx}].turn"),
                format!("turn {} does not match step index {idx}", step.turn),
            ));
        }
        if step.action.is_empty() {
            issues.push((format!("steps[{idx}].action"), "action must be nonempty".into()));
        }
        if let Some(h) = step.entropy {
            if !h.is_finite() || h < 0.0 {
                issues.push((
                    format!("steps[{idx}].entropy"),
                    format!("entropy must be finite and non-negative, got {h}"),
                ));
            }
        }
        check_state(&step.state, &format!("steps[{idx}].state"), &mut issues);
    }
    check_state(&traj.final_state, "final_state", &mut issues);

    if traj.success && traj.steps.is_empty() {
        issues.push(("steps".into(), "successful trajectory has no steps".into()));
    }
    match (traj.success, traj.success_turn) {
        (true, None) => issues.push((
            "success_turn".into(),
            "success is true but success_turn is absent".into(),
        )),
        (false, Some(_)) => issues.push((
            "success_turn".into(),
            "success_turn present on an unsuccessful trajectory".into(),
        )),
        (true, Some(turn)) if turn == 0 || turn > traj.steps.len() => issues.push((
            "success_turn".into(),
            format!("success_turn {turn} outside 1..={} (number of steps)", traj.steps.len()),
        )),
        _ => {}
    }
    issues
}

/// Checks every type invariant of an in-memory run. Findings, never errors.
pub fn validate_run(run: &RunLog) -> ValidationReport {
    let mut findings: Vec<Finding> = check_metadata(&run.metadata)
        .into_iter()
        .map(|(field, message)| Finding {
            task_id: None,
            rollout_idx: None,
            field,
            message,
        })
        .collect();

    let mut seen: HashMap<(&str, u32), usize> = HashMap::new();
    for (pos, traj) in run.trajectories.iter().enumerate() {
        let locate = |field: String, message: String| Finding {
            task_id: Some(traj.task_id.clone()),
            rollout_idx: Some(traj.rollout_idx),
            field,
            message,
        };
        findings.extend(check_trajectory(traj).into_iter().map(|(f, m)| locate(f, m)));
        if let Some(first) = seen.insert(traj.key(), pos) {
            seen.insert(traj.key(), first);
            findings.push(locate(
                "rollout_idx".into(),
                format!("duplicate (task_id, rollout_idx); first occurrence is trajectory #{first}"),
            ));
        }
    }
    ValidationReport { findings }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Step;
    use std::collections::BTreeMap;

    fn meta() -> RunMetadata {
        RunMetadata {
            run_id: "r".into(),
            model_name: "m".into(),
            environment_name: "e".into(),
            memory_mode: MemoryMode::Full,
            t_max: 4,
            extra: BTreeMap::new(),
            unknown_fields: BTreeMap::new(),
        }
    }

    fn traj(task: &str, turns: usize, success_turn: Option<usize>) -> Trajectory {
        Trajectory {
            task_id: task.into(),
            rollout_idx: 0,
            success: success_turn.is_some(),
            success_turn,
            target_entities: None,
            final_state: StateRepr::text("end"),
            steps: (0..turns)
                .map(|t| Step::new(t, StateRepr::text(format!("s{t}")), "go"))
                .collect(),
            unknown_fields: BTreeMap::new(),
        }
    }

    #[test]
    fn valid_run_has_no_findings() {
        let run = RunLog {
            metadata: meta(),
            trajectories: vec![traj("a", 3, Some(2)), traj("b", 2, None)],
        };
        assert!(validate_run(&run).is_valid());
    }

    #[test]
    fn success_turn_past_end() {
        let run = RunLog {
            metadata: meta(),
            trajectories: vec![traj("a", 3, Some(4))],
        };
        let report = validate_run(&run);
        assert_eq!(report.findings.len(), 1);
        assert_eq!(report.findings[0].field, "success_turn");
    }

    #[test]
    fn duplicate_pairs_reported_once_each() {
        let t = traj("a", 2, Some(1));
        let run = RunLog {
            metadata: meta(),
            trajectories: vec![t.clone(), t.clone(), traj("b", 1, None)],
        };
        let report = validate_run(&run);
        assert_eq!(report.findings.len(), 1);
        assert_eq!(report.findings[0].task_id.as_deref(), Some("a"));

        let run = RunLog {
            metadata: meta(),
            trajectories: vec![t.clone(), t.clone(), t],
        };
        assert_eq!(validate_run(&run).findings.len(), 2);
    }

    #[test]
    fn step_level_findings() {
        let mut t = traj("a", 3, None);
        t.steps[1].turn = 7;
        t.steps[2].action.clear();
        t.steps[0].entropy = Some(-1.0);
        t.final_state = StateRepr::vector(vec![]);
        let fields: Vec<_> = check_trajectory(&t).into_iter().map(|(f, _)| f).collect();
        assert_eq!(
            fields,
            vec!["steps[0].entropy", "steps[1].turn", "steps[2].action", "final_state"]
        );
    }

    #[test]
    fn metadata_findings() {
        let mut m = meta();
        m.run_id.clear();
        m.t_max = 0;
        m.memory_mode = MemoryMode::Windowed(0);
        assert_eq!(check_metadata(&m).len(), 3);
    }
}
