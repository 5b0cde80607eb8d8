//! Naive reference implementations.
//!
//! Written directly from the metric definitions, sharing nothing with the
//! production code paths beyond the domain types. Quadratic and cubic loops
//! are fine here.

use crate::error::{Result, TideError};
use crate::model::{StateIdentityConfig, StateRepr, Trajectory};

/// AUV by counting, for every `t`, the tasks solved within `t` turns.
pub fn oracle_auv(success_turns: &[Option<usize>], t_max: usize) -> f64 {
    if success_turns.is_empty() || t_max == 0 {
        return 0.0;
    }
    let n = success_turns.len() as f64;
    let p = |t: usize| -> f64 {
        if t == 0 {
            return 0.0;
        }
        let solved = success_turns
            .iter()
            .filter(|s| matches!(s, Some(turn) if *turn >= 1 && *turn <= t))
            .count();
        solved as f64 / n
    };
    let mut area = 0.0;
    for t in 0..t_max {
        area += (p(t) + p(t + 1)) / 2.0;
    }
    area / t_max as f64
}

fn naive_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

/// Identity labels: exact equality, or most-recent-first bucket matching in
/// cosine mode.
fn label_states(states: &[StateRepr], cfg: &StateIdentityConfig) -> Vec<usize> {
    let mut labels: Vec<usize> = Vec::with_capacity(states.len());
    match *cfg {
        StateIdentityConfig::Exact => {
            for (t, s) in states.iter().enumerate() {
                let earlier = (0..t).find(|&k| states[k] == *s);
                labels.push(earlier.map_or(t, |k| labels[k]));
            }
        }
        StateIdentityConfig::Cosine { threshold } => {
            for (t, s) in states.iter().enumerate() {
                // distinct labels ordered by their latest visit, newest first
                let mut candidates: Vec<(usize, usize)> = Vec::new();
                for k in (0..t).rev() {
                    if !candidates.iter().any(|&(l, _)| l == labels[k]) {
                        candidates.push((labels[k], k));
                    }
                }
                let a = s.as_vector().unwrap_or(&[]);
                let hit = candidates.iter().find(|&&(_, k)| {
                    let b = states[k].as_vector().unwrap_or(&[]);
                    a == b || naive_cosine(a, b) >= threshold
                });
                labels.push(hit.map_or(t, |&(l, _)| l));
            }
        }
    }
    labels
}

/// Loop action count and per-action mask, by enumerating every `(i, j)`.
///
/// A cycle is any `i < j` with equal states at both ends and pairwise
/// distinct states on `i..j`. Cycles are visited by end index with a
/// register holding the last counted-as-previous cycle: a cycle that starts
/// before the register's end is ignored; one that starts exactly at its end
/// and matches it element-wise is a loop; either way the register moves on.
pub fn oracle_loops<A: AsRef<str>>(
    states: &[StateRepr],
    actions: &[A],
    cfg: &StateIdentityConfig,
) -> (usize, Vec<bool>) {
    assert_eq!(states.len(), actions.len() + 1);
    let labels = label_states(states, cfg);
    let n = states.len();

    let mut cycles = Vec::new();
    for j in 1..n {
        for i in 0..j {
            if labels[i] != labels[j] {
                continue;
            }
            let mut distinct = true;
            for p in i..j {
                for q in (p + 1)..j {
                    if labels[p] == labels[q] {
                        distinct = false;
                    }
                }
            }
            if distinct {
                cycles.push((i, j));
            }
        }
    }

    let mut mask = vec![false; actions.len()];
    let mut count = 0;
    let mut previous: Option<(usize, usize)> = None;
    for &(i, j) in &cycles {
        if let Some((pi, pj)) = previous {
            if i < pj {
                continue;
            }
            let same_shape = j - i == pj - pi;
            let same_content = same_shape
                && (0..=(j - i)).all(|d| labels[i + d] == labels[pi + d])
                && (0..(j - i)).all(|d| actions[i + d].as_ref() == actions[pi + d].as_ref());
            if i == pj && same_content {
                count += j - i;
                for m in &mut mask[i..j] {
                    *m = true;
                }
            }
        }
        previous = Some((i, j));
    }
    (count, mask)
}

/// Recall lags by scanning backwards from every qualifying interaction.
pub fn oracle_recall_lag(traj: &Trajectory) -> Result<Vec<usize>> {
    let missing = |field: &str| TideError::MissingAnnotation {
        task_id: traj.task_id.clone(),
        rollout_idx: traj.rollout_idx,
        field: field.to_string(),
    };
    let targets = traj
        .target_entities
        .as_ref()
        .ok_or_else(|| missing("target_entities"))?;
    for step in &traj.steps {
        if step.observed_entities.is_none() {
            return Err(missing("observed_entities"));
        }
        if step.interacted_entities.is_none() {
            return Err(missing("interacted_entities"));
        }
    }
    let is_target = |obj: &str| targets.iter().any(|g| g.trim() == obj);
    let observed_at = |k: usize, obj: &str| {
        traj.steps[k]
            .observed_entities
            .as_ref()
            .is_some_and(|set| set.iter().any(|e| e.trim() == obj))
    };

    let mut lags = Vec::new();
    for t in 0..traj.steps.len() {
        let mut objs: Vec<&str> = traj.steps[t]
            .interacted_entities
            .iter()
            .flatten()
            .map(|s| s.trim())
            .collect();
        objs.sort();
        objs.dedup();
        for obj in objs {
            if !is_target(obj) {
                continue;
            }
            if let Some(k) = (0..t).rev().find(|&k| observed_at(k, obj)) {
                lags.push(t - k);
            }
        }
    }
    Ok(lags)
}
