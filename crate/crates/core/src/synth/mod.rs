//! Synthetic trajectory corpora with known ground truth, plus brute-force
//! oracles used to cross-check the production metrics.

pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TideError};
use crate::model::{MemoryMode, RunLog, RunMetadata, StateRepr, Step, Trajectory};

pub use oracle::{oracle_auv, oracle_loops, oracle_recall_lag};

const ENTITY_ALPHABET: usize = 6;

fn default_run_id() -> String {
    "synthetic".into()
}
fn default_model() -> String {
    "synthetic-agent".into()
}
fn default_environment() -> String {
    "synthetic-env".into()
}
fn default_memory_mode() -> MemoryMode {
    MemoryMode::Full
}
fn default_true() -> bool {
    true
}

/// Recipe for a synthetic run.
///
/// `success_turn_distribution` lists `(turn, probability)` pairs, with a
/// `null` turn meaning unsolved; in JSON: `[[1, 0.3], [4, 0.2], [null, 0.5]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub n_tasks: usize,
    pub success_turn_distribution: Vec<(Option<usize>, f64)>,
    pub state_alphabet_size: usize,
    pub action_alphabet_size: usize,
    pub loop_injection_rate: f64,
    pub seed: u64,
    #[serde(default = "default_run_id")]
    pub run_id: String,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default = "default_environment")]
    pub environment: String,
    #[serde(default = "default_memory_mode")]
    pub memory_mode: MemoryMode,
    /// Header horizon; defaults to the largest turn in the distribution.
    #[serde(default)]
    pub t_max: Option<usize>,
    /// Emit entity and entropy annotations.
    #[serde(default = "default_true")]
    pub annotate: bool,
}

impl SynthSpec {
    pub fn new(n_tasks: usize, success_turn_distribution: Vec<(Option<usize>, f64)>, seed: u64) -> Self {
        SynthSpec {
            n_tasks,
            success_turn_distribution,
            state_alphabet_size: 4,
            action_alphabet_size: 3,
            loop_injection_rate: 0.1,
            seed,
            run_id: default_run_id(),
            model: default_model(),
            environment: default_environment(),
            memory_mode: MemoryMode::Full,
            t_max: None,
            annotate: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(TideError::InvalidSpec(msg));
        if self.n_tasks == 0 {
            return bad("n_tasks must be positive".into());
        }
        if self.success_turn_distribution.is_empty() {
            return bad("success_turn_distribution is empty".into());
        }
        let mut total = 0.0;
        for &(turn, p) in &self.success_turn_distribution {
            if !(p.is_finite() && p >= 0.0) {
                return bad(format!("probability {p} is not a finite non-negative number"));
            }
            if turn == Some(0) {
                return bad("success turns are 1-based".into());
            }
            total += p;
        }
        if (total - 1.0).abs() > 1e-9 {
            return bad(format!("probabilities sum to {total}, not 1"));
        }
        if !(2..=8).contains(&self.state_alphabet_size) {
            return bad(format!(
                "state_alphabet_size {} outside [2, 8]",
                self.state_alphabet_size
            ));
        }
        if !(1..=4).contains(&self.action_alphabet_size) {
            return bad(format!(
                "action_alphabet_size {} outside [1, 4]",
                self.action_alphabet_size
            ));
        }
        if !(0.0..=1.0).contains(&self.loop_injection_rate) {
            return bad(format!(
                "loop_injection_rate {} outside [0, 1]",
                self.loop_injection_rate
            ));
        }
        if self.t_max == Some(0) {
            return bad("t_max must be positive".into());
        }
        Ok(())
    }

    pub fn resolved_t_max(&self) -> usize {
        self.t_max.unwrap_or_else(|| {
            self.success_turn_distribution
                .iter()
                .filter_map(|(t, _)| *t)
                .max()
                .unwrap_or(1)
        })
    }

    fn draw_outcome(&self, rng: &mut impl Rng) -> Option<usize> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for &(turn, p) in &self.success_turn_distribution {
            acc += p;
            if u < acc {
                return turn;
            }
        }
        self.success_turn_distribution.last().and_then(|(t, _)| *t)
    }
}

struct Walk {
    states: Vec<usize>,
    actions: Vec<usize>,
    low_entropy: Vec<bool>,
}

/// Random walk of exactly `len` actions. With probability
/// `loop_injection_rate` per step, a random cycle from the current state is
/// appended twice in a row; an injection at the start of a walk always
/// yields a detectable loop.
fn random_walk(spec: &SynthSpec, len: usize, rng: &mut impl Rng) -> Walk {
    let n_states = spec.state_alphabet_size;
    let n_actions = spec.action_alphabet_size;
    let mut walk = Walk {
        states: vec![rng.random_range(0..n_states)],
        actions: Vec::with_capacity(len),
        low_entropy: Vec::with_capacity(len),
    };
    while walk.actions.len() < len {
        let remaining = len - walk.actions.len();
        let inject = spec.loop_injection_rate > 0.0 && remaining >= 2 && rng.random_bool(spec.loop_injection_rate);
        if inject {
            let current = *walk.states.last().expect("walk starts with a state");
            let cycle_len = rng.random_range(1..=n_states.min(remaining / 2));
            let mut others: Vec<usize> = (0..n_states).filter(|&s| s != current).collect();
            others.shuffle(rng);
            let mut cycle_states: Vec<usize> = others[..cycle_len - 1].to_vec();
            cycle_states.push(current);
            let cycle_actions: Vec<usize> = (0..cycle_len).map(|_| rng.random_range(0..n_actions)).collect();
            for copy in 0..2 {
                walk.states.extend(&cycle_states);
                walk.actions.extend(&cycle_actions);
                walk.low_entropy.extend(std::iter::repeat_n(copy == 1, cycle_len));
            }
        } else {
            walk.actions.push(rng.random_range(0..n_actions));
            walk.states.push(rng.random_range(0..n_states));
            walk.low_entropy.push(false);
        }
    }
    walk
}

fn random_entities(rng: &mut impl Rng, p: f64) -> BTreeSet<String> {
    (0..ENTITY_ALPHABET)
        .filter(|_| rng.random_bool(p))
        .map(|k| format!("obj{k}"))
        .collect()
}

fn generate_trajectory(spec: &SynthSpec, task_index: usize, t_max: usize) -> Trajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(task_index as u64);

    let outcome = spec.draw_outcome(&mut rng);
    let len = match outcome {
        Some(turn) => turn,
        None => rng.random_range(1..=t_max),
    };
    let walk = random_walk(spec, len, &mut rng);
    let state = |s: usize| StateRepr::text(format!("s{s}"));

    let steps = (0..len)
        .map(|t| {
            let mut step = Step::new(t, state(walk.states[t]), format!("act{}", walk.actions[t]));
            if spec.annotate {
                step.entropy = Some(if walk.low_entropy[t] {
                    rng.random_range(0.0..0.4)
                } else {
                    rng.random_range(0.4..2.0)
                });
                step.observed_entities = Some(random_entities(&mut rng, 0.3));
                step.interacted_entities = Some(random_entities(&mut rng, 0.15));
            }
            step
        })
        .collect();
    let target_entities = spec.annotate.then(|| {
        let mut targets = random_entities(&mut rng, 0.3);
        if targets.is_empty() {
            targets.insert(format!("obj{}", rng.random_range(0..ENTITY_ALPHABET)));
        }
        targets
    });

    Trajectory {
        task_id: format!("task-{task_index:05}"),
        rollout_idx: 0,
        success: outcome.is_some(),
        success_turn: outcome,
        target_entities,
        final_state: state(walk.states[len]),
        steps,
        unknown_fields: BTreeMap::new(),
    }
}

/// Deterministic for a fixed spec. Each task draws from its own stream of
/// the seeded generator, so output does not depend on scheduling.
pub fn generate_synthetic_run(spec: &SynthSpec) -> Result<RunLog> {
    spec.validate()?;
    let t_max = spec.resolved_t_max();
    let trajectories = (0..spec.n_tasks)
        .into_par_iter()
        .map(|i| generate_trajectory(spec, i, t_max))
        .collect();
    let mut extra = BTreeMap::new();
    extra.insert("generator".to_string(), "synth".to_string());
    extra.insert("seed".to_string(), spec.seed.to_string());
    let mut run = RunLog {
        metadata: RunMetadata {
            run_id: spec.run_id.clone(),
            model_name: spec.model.clone(),
            environment_name: spec.environment.clone(),
            memory_mode: spec.memory_mode,
            t_max,
            extra,
            unknown_fields: BTreeMap::new(),
        },
        trajectories,
    };
    run.canonicalize();
    Ok(run)
}
