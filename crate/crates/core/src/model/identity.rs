use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::StateRepr;
use crate::error::{Result, TideError};

/// How two logged states are judged identical.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum StateIdentityConfig {
    /// Byte equality of text; element-wise equality of vectors.
    #[default]
    Exact,
    /// Cosine similarity of embeddings at or above `threshold`.
    Cosine { threshold: f64 },
}

impl StateIdentityConfig {
    pub const DEFAULT_COSINE_THRESHOLD: f64 = 0.999;

    pub fn cosine(threshold: f64) -> Result<Self> {
        let cfg = StateIdentityConfig::Cosine { threshold };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        match *self {
            StateIdentityConfig::Exact => Ok(()),
            StateIdentityConfig::Cosine { threshold } => {
                if threshold > 0.0 && threshold <= 1.0 {
                    Ok(())
                } else {
                    Err(TideError::InvalidArgument(format!(
                        "cosine threshold must lie in (0, 1], got {threshold}"
                    )))
                }
            }
        }
    }
}

impl fmt::Display for StateIdentityConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StateIdentityConfig::Exact => f.write_str("exact"),
            StateIdentityConfig::Cosine { threshold } => write!(f, "cosine:{threshold}"),
        }
    }
}

impl FromStr for StateIdentityConfig {
    type Err = TideError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "exact" => Ok(StateIdentityConfig::Exact),
            "cosine" => StateIdentityConfig::cosine(Self::DEFAULT_COSINE_THRESHOLD),
            other => {
                let Some(theta) = other.strip_prefix("cosine:") else {
                    return Err(TideError::InvalidArgument(format!(
                        "state identity must be `exact` or `cosine:THETA`, got `{other}`"
                    )));
                };
                let threshold: f64 = theta
                    .parse()
                    .map_err(|_| TideError::InvalidArgument(format!("bad cosine threshold `{theta}`")))?;
                StateIdentityConfig::cosine(threshold)
            }
        }
    }
}

/// Cosine similarity, computed on max-abs scaled copies so large
/// components cannot overflow the norms.
fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(TideError::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let scale_a = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale_b = b.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if scale_a == 0.0 || scale_b == 0.0 {
        return Err(TideError::ZeroNormVector);
    }
    let (mut dot, mut norm_a, mut norm_b) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x / scale_a, y / scale_b);
        dot += x * y;
        norm_a += x * x;
        norm_b += y * y;
    }
    Ok((dot / (norm_a.sqrt() * norm_b.sqrt())).clamp(-1.0, 1.0))
}

/// Pairwise state identity. Symmetric and reflexive in both modes.
pub fn states_equal(a: &StateRepr, b: &StateRepr, cfg: &StateIdentityConfig) -> Result<bool> {
    match *cfg {
        StateIdentityConfig::Exact => Ok(match (a, b) {
            (StateRepr::Text { value: x }, StateRepr::Text { value: y }) => x == y,
            (StateRepr::Vector { values: x }, StateRepr::Vector { values: y }) => x == y,
            _ => false,
        }),
        StateIdentityConfig::Cosine { threshold } => {
            cfg.check()?;
            let (Some(x), Some(y)) = (a.as_vector(), b.as_vector()) else {
                return Err(TideError::StateKindMismatch);
            };
            let cos = cosine_similarity(x, y)?;
            // identical vectors are equal even when rounding leaves cos a hair below 1
            Ok(x == y || cos >= threshold)
        }
    }
}

#[derive(PartialEq, Eq, Hash)]
enum ExactKey<'a> {
    Text(&'a str),
    Vector(Vec<u64>),
}

impl<'a> ExactKey<'a> {
    fn of(state: &'a StateRepr) -> Self {
        match state {
            StateRepr::Text { value } => ExactKey::Text(value),
            // +0.0 folds negative zero onto positive zero
            StateRepr::Vector { values } => ExactKey::Vector(values.iter().map(|x| (x + 0.0).to_bits()).collect()),
        }
    }
}

/// Maps each state of a sequence to a small integer identity.
///
/// In exact mode ids are equality classes. In cosine mode a state joins the
/// bucket of the first representative it matches, scanning buckets from the
/// most recently visited; the matched state then becomes that bucket's
/// representative. A state matching no bucket opens a new one.
pub fn assign_state_ids<'a, I>(states: I, cfg: &StateIdentityConfig) -> Result<Vec<usize>>
where
    I: IntoIterator<Item = &'a StateRepr>,
{
    cfg.check()?;
    match cfg {
        StateIdentityConfig::Exact => {
            let mut seen: HashMap<ExactKey<'a>, usize> = HashMap::new();
            Ok(states
                .into_iter()
                .map(|s| {
                    let next = seen.len();
                    *seen.entry(ExactKey::of(s)).or_insert(next)
                })
                .collect())
        }
        StateIdentityConfig::Cosine { .. } => {
            // (bucket id, representative), most recently visited first
            let mut buckets: Vec<(usize, &'a StateRepr)> = Vec::new();
            let mut next_id = 0;
            let mut ids = Vec::new();
            for state in states {
                let mut hit = None;
                for (pos, (_, rep)) in buckets.iter().enumerate() {
                    if states_equal(state, rep, cfg)? {
                        hit = Some(pos);
                        break;
                    }
                }
                let id = match hit {
                    Some(pos) => {
                        let (id, _) = buckets.remove(pos);
                        id
                    }
                    None => {
                        // validates kind and norm even when no bucket exists yet
                        states_equal(state, state, cfg)?;
                        next_id += 1;
                        next_id - 1
                    }
                };
                buckets.insert(0, (id, state));
                ids.push(id);
            }
            Ok(ids)
        }
    }
}
