#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::Rng;
use tide_core::model::{MemoryMode, RunLog, RunMetadata, StateRepr, Step, Trajectory};

pub fn metadata(run_id: &str, t_max: usize) -> RunMetadata {
    RunMetadata {
        run_id: run_id.to_string(),
        model_name: "model".into(),
        environment_name: "env".into(),
        memory_mode: MemoryMode::Full,
        t_max,
        extra: BTreeMap::new(),
        unknown_fields: BTreeMap::new(),
    }
}

pub fn trajectory(task_id: &str, states: Vec<StateRepr>, actions: &[&str]) -> Trajectory {
    assert_eq!(states.len(), actions.len() + 1);
    let mut states = states;
    let final_state = states.pop().unwrap();
    Trajectory {
        task_id: task_id.to_string(),
        rollout_idx: 0,
        success: false,
        success_turn: None,
        target_entities: None,
        final_state,
        steps: states
            .into_iter()
            .zip(actions)
            .enumerate()
            .map(|(t, (s, a))| Step::new(t, s, *a))
            .collect(),
        unknown_fields: BTreeMap::new(),
    }
}

/// Text states from a string, one per character.
pub fn text_states(s: &str) -> Vec<StateRepr> {
    s.chars().map(|c| StateRepr::text(c.to_string())).collect()
}

/// One trajectory per entry; solved trajectories have exactly `turn` steps,
/// unsolved ones a single step.
pub fn run_from_turns(run_id: &str, turns: &[Option<usize>], t_max: usize) -> RunLog {
    let trajectories = turns
        .iter()
        .enumerate()
        .map(|(i, turn)| {
            let len = turn.unwrap_or(1).max(1);
            let states = (0..=len).map(|k| StateRepr::text(format!("s{k}"))).collect();
            let actions = vec!["act"; len];
            let mut t = trajectory(&format!("task{i:04}"), states, &actions);
            t.success = turn.is_some();
            t.success_turn = *turn;
            t
        })
        .collect();
    RunLog {
        metadata: metadata(run_id, t_max),
        trajectories,
    }
}

/// Success turns in `1..=max_turn` or unsolved.
pub fn random_turns(rng: &mut impl Rng, n: usize, max_turn: usize) -> Vec<Option<usize>> {
    (0..n)
        .map(|_| rng.random_bool(0.7).then(|| rng.random_range(1..=max_turn)))
        .collect()
}

/// Random walk over small state and action alphabets.
pub fn random_walk(
    rng: &mut impl Rng,
    alphabet: usize,
    n_actions: usize,
    max_len: usize,
) -> (Vec<StateRepr>, Vec<String>) {
    let len = rng.random_range(0..=max_len);
    let states = (0..=len)
        .map(|_| StateRepr::text(((b'A' + rng.random_range(0..alphabet) as u8) as char).to_string()))
        .collect();
    let actions = (0..len)
        .map(|_| format!("a{}", rng.random_range(0..n_actions)))
        .collect();
    (states, actions)
}

pub fn sample_path(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("samples")
        .join(name)
}
