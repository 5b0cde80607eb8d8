//! Success curves and Area Under Variation.
//!
//! `P_t` is the fraction of trajectories solved within the first `t` turns,
//! with `P_0 = 0`. AUV is the trapezoid area under `P` over `[0, t_max]`
//! divided by `t_max`. Equivalently it is a weighted sum of the per-step
//! gains `P_{k+1} - P_k` with weight `t_max - k - 0.5`, which is what makes
//! a per-trajectory score and a mean-of-scores decomposition possible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TideError};
use crate::model::RunLog;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuccessCurve {
    t_max: usize,
    p: Vec<f64>,
    n_tasks: usize,
}

impl SuccessCurve {
    /// Builds a curve from explicit values `p[0..=t_max]`.
    ///
    /// Requires `p[0] == 0` and a non-decreasing sequence inside `[0, 1]`.
    /// `n_tasks` is carried along for reporting.
    pub fn from_values(p: Vec<f64>, n_tasks: usize) -> Result<Self> {
        let bad = |msg: String| Err(TideError::InvalidArgument(msg));
        if p.len() < 2 {
            return bad(format!("curve needs t_max >= 1, got {} points", p.len()));
        }
        if n_tasks == 0 {
            return bad("curve needs n_tasks >= 1".into());
        }
        if p[0] != 0.0 {
            return bad(format!("curve must start at 0, got {}", p[0]));
        }
        for (t, w) in p.windows(2).enumerate() {
            if w[1].partial_cmp(&w[0]).is_none_or(|o| o.is_lt()) {
                return bad(format!("curve decreases between t={t} and t={}", t + 1));
            }
        }
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return bad("curve values must lie in [0, 1]".into());
        }
        Ok(SuccessCurve {
            t_max: p.len() - 1,
            p,
            n_tasks,
        })
    }

    pub fn t_max(&self) -> usize {
        self.t_max
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn n_tasks(&self) -> usize {
        self.n_tasks
    }

    /// `P_{t_max}`, the success rate at the end of the window.
    pub fn final_rate(&self) -> f64 {
        self.p[self.t_max]
    }

    /// Marginal gains `P_{k+1} - P_k` for `k = 0..t_max`.
    pub fn gains(&self) -> Vec<f64> {
        self.p.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

/// Cumulative success proportion over `t = 0..=t_max`. Success turns past
/// `t_max` count as unsolved.
pub fn build_success_curve(run: &RunLog, t_max: usize) -> Result<SuccessCurve> {
    if run.trajectories.is_empty() {
        return Err(TideError::EmptyRun);
    }
    if t_max == 0 {
        return Err(TideError::InvalidArgument("t_max must be at least 1".into()));
    }
    let mut solved_at = vec![0usize; t_max + 1];
    for traj in &run.trajectories {
        if let Some(turn) = traj.solved_within(t_max) {
            solved_at[turn] += 1;
        }
    }
    // P_0 stays 0 regardless of content
    solved_at[0] = 0;
    let n = run.trajectories.len();
    let mut cumulative = 0;
    let p = solved_at
        .iter()
        .map(|&c| {
            cumulative += c;
            cumulative as f64 / n as f64
        })
        .collect();
    Ok(SuccessCurve { t_max, p, n_tasks: n })
}

pub fn auv_trapezoid(curve: &SuccessCurve) -> f64 {
    let area: f64 = curve.p.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum();
    area / curve.t_max as f64
}

/// Weight of the gain realized between turn `k` and `k + 1`.
pub fn increment_weight(t_max: usize, k: usize) -> f64 {
    t_max as f64 - k as f64 - 0.5
}

pub fn auv_weighted_increments(curve: &SuccessCurve) -> f64 {
    let area: f64 = curve
        .gains()
        .iter()
        .enumerate()
        .map(|(k, gain)| increment_weight(curve.t_max, k) * gain)
        .sum();
    area / curve.t_max as f64
}

/// Single-trajectory AUV: a unit gain at `k = success_turn - 1`.
pub fn trajectory_score(success_turn: Option<usize>, t_max: usize) -> f64 {
    match success_turn {
        Some(turn) if turn >= 1 && turn <= t_max => increment_weight(t_max, turn - 1) / t_max as f64,
        _ => 0.0,
    }
}

/// Per-trajectory scores, in the run's trajectory order. Their mean is the run AUV.
pub fn per_trajectory_auv(run: &RunLog, t_max: usize) -> Result<Vec<f64>> {
    if run.trajectories.is_empty() {
        return Err(TideError::EmptyRun);
    }
    if t_max == 0 {
        return Err(TideError::InvalidArgument("t_max must be at least 1".into()));
    }
    Ok(run
        .trajectories
        .iter()
        .map(|t| trajectory_score(t.solved_within(t_max), t_max))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub confidence: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            confidence: 0.95,
            resamples: 2000,
            seed: 0,
        }
    }
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Percentile bootstrap interval for the mean of `scores`.
///
/// Deterministic for a given seed. The interval is clamped into
/// `[min(scores), max(scores)]`, where every resampled mean lies anyway.
pub fn bootstrap_ci(scores: &[f64], confidence: f64, resamples: usize, seed: u64) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(TideError::EmptyScores);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(TideError::InvalidArgument(format!(
            "confidence must lie in (0, 1), got {confidence}"
        )));
    }
    if resamples < 100 {
        return Err(TideError::InvalidArgument(format!(
            "at least 100 resamples required, got {resamples}"
        )));
    }
    let n = scores.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            let sum: f64 = (0..n).map(|_| scores[rng.random_range(0..n)]).sum();
            sum / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);

    let alpha = 1.0 - confidence;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let low = quantile_sorted(&means, alpha / 2.0).clamp(min, max);
    let high = quantile_sorted(&means, 1.0 - alpha / 2.0).clamp(min, max);
    Ok((low, high))
}

/// Smallest `t` at which every curve has reached `(1 - epsilon)` of its
/// value at the shared horizon.
pub fn suggest_t_max(curves: &[SuccessCurve], epsilon: f64) -> Result<usize> {
    let Some(first) = curves.first() else {
        return Err(TideError::EmptyInput);
    };
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(TideError::InvalidArgument(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let horizon = first.t_max;
    if let Some(c) = curves.iter().find(|c| c.t_max != horizon) {
        return Err(TideError::MismatchedHorizons {
            expected: horizon,
            found: c.t_max,
        });
    }
    let saturated = |t: usize| curves.iter().all(|c| c.p[t] >= (1.0 - epsilon) * c.p[horizon]);
    Ok((0..=horizon).find(|&t| saturated(t)).unwrap_or(horizon))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuvResult {
    pub t_max: usize,
    pub auv: f64,
    pub sr_final: f64,
    pub per_task_scores: Vec<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub n_tasks: usize,
}

/// AUV, final success rate, per-trajectory scores and optionally a bootstrap
/// interval. The interval is widened to contain the point estimate if needed.
pub fn compute_auv(run: &RunLog, t_max: usize, bootstrap: Option<&BootstrapConfig>) -> Result<AuvResult> {
    let curve = build_success_curve(run, t_max)?;
    let auv = auv_trapezoid(&curve);
    let per_task_scores = per_trajectory_auv(run, t_max)?;
    let (ci_low, ci_high) = match bootstrap {
        Some(cfg) => {
            let (lo, hi) = bootstrap_ci(&per_task_scores, cfg.confidence, cfg.resamples, cfg.seed)?;
            (Some(lo.min(auv)), Some(hi.max(auv)))
        }
        None => (None, None),
    };
    Ok(AuvResult {
        t_max,
        auv,
        sr_final: curve.final_rate(),
        per_task_scores,
        ci_low,
        ci_high,
        n_tasks: curve.n_tasks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::run_with_success_turns;

    fn fixture() -> RunLog {
        run_with_success_turns(&[Some(1), Some(1), Some(3), None], 4)
    }

    #[test]
    fn curve_by_direct_counting() {
        let curve = build_success_curve(&fixture(), 4).unwrap();
        assert_eq!(curve.values(), &[0.0, 0.5, 0.5, 0.75, 0.75]);
    }

    #[test]
    fn all_unsolved_curve_is_zero() {
        let run = run_with_success_turns(&[None, None, None], 5);
        let curve = build_success_curve(&run, 5).unwrap();
        assert!(curve.values().iter().all(|&p| p == 0.0));
        assert_eq!(auv_trapezoid(&curve), 0.0);
        assert_eq!(auv_weighted_increments(&curve), 0.0);
    }

    #[test]
    fn late_success_is_clamped() {
        let run = run_with_success_turns(&[Some(5)], 6);
        let curve = build_success_curve(&run, 4).unwrap();
        assert_eq!(curve.values(), &[0.0; 5]);
        assert_eq!(per_trajectory_auv(&run, 4).unwrap(), vec![0.0]);
    }

    #[test]
    fn hand_trapezoid_and_weighted_values() {
        let curve = build_success_curve(&fixture(), 4).unwrap();
        assert_eq!(auv_trapezoid(&curve), 0.53125);
        assert_eq!(auv_weighted_increments(&curve), 0.53125);
    }

    #[test]
    fn all_solved_at_first_turn() {
        let run = run_with_success_turns(&[Some(1); 7], 20);
        let curve = build_success_curve(&run, 20).unwrap();
        assert_eq!(auv_trapezoid(&curve), 0.975);
        assert_eq!(auv_weighted_increments(&curve), 0.975);
        assert_eq!(trajectory_score(Some(1), 20), 0.975);
    }

    #[test]
    fn per_task_scores_match_hand_values() {
        let scores = per_trajectory_auv(&fixture(), 4).unwrap();
        assert_eq!(scores, vec![0.875, 0.875, 0.375, 0.0]);
        assert_eq!(scores.iter().sum::<f64>() / 4.0, 0.53125);
    }

    #[test]
    fn empty_run_errors() {
        let run = run_with_success_turns(&[], 4);
        assert!(matches!(build_success_curve(&run, 4), Err(TideError::EmptyRun)));
        assert!(matches!(per_trajectory_auv(&run, 4), Err(TideError::EmptyRun)));
    }

    #[test]
    fn curve_validation() {
        assert!(SuccessCurve::from_values(vec![0.0, 0.5, 1.0], 2).is_ok());
        assert!(SuccessCurve::from_values(vec![0.5, 0.5], 2).is_err());
        assert!(SuccessCurve::from_values(vec![0.0, 1.0, 0.5], 2).is_err());
        assert!(SuccessCurve::from_values(vec![0.0, 1.3], 2).is_err());
        assert!(SuccessCurve::from_values(vec![0.0], 2).is_err());
    }

    #[test]
    fn bootstrap_degenerate_and_deterministic() {
        let same = vec![0.1; 37];
        assert_eq!(bootstrap_ci(&same, 0.95, 500, 3).unwrap(), (0.1, 0.1));

        let scores: Vec<f64> = (0..50).map(|i| (i % 7) as f64 / 7.0).collect();
        let a = bootstrap_ci(&scores, 0.9, 400, 11).unwrap();
        let b = bootstrap_ci(&scores, 0.9, 400, 11).unwrap();
        assert_eq!(a, b);
        assert!(a.0 < a.1);

        assert!(matches!(bootstrap_ci(&[], 0.9, 400, 1), Err(TideError::EmptyScores)));
        assert!(bootstrap_ci(&scores, 0.9, 99, 1).is_err());
        assert!(bootstrap_ci(&scores, 1.0, 400, 1).is_err());
    }

    #[test]
    fn compute_auv_contains_point_estimate() {
        let result = compute_auv(&fixture(), 4, Some(&BootstrapConfig::default())).unwrap();
        assert_eq!(result.auv, 0.53125);
        assert_eq!(result.sr_final, 0.75);
        let (lo, hi) = (result.ci_low.unwrap(), result.ci_high.unwrap());
        assert!(lo <= result.auv && result.auv <= hi);
    }

    fn curve_saturating_at(at: usize, horizon: usize, n: usize) -> SuccessCurve {
        let p = (0..=horizon)
            .map(|t| {
                if t >= at {
                    1.0
                } else {
                    (t * n / at / 2) as f64 / n as f64
                }
            })
            .collect();
        SuccessCurve::from_values(p, n).unwrap()
    }

    #[test]
    fn saturation_point() {
        assert_eq!(suggest_t_max(&[curve_saturating_at(12, 30, 10)], 0.01).unwrap(), 12);
        let zero = SuccessCurve::from_values(vec![0.0; 11], 3).unwrap();
        assert_eq!(suggest_t_max(&[zero.clone(), zero], 0.01).unwrap(), 0);
        let both = [curve_saturating_at(5, 20, 10), curve_saturating_at(9, 20, 10)];
        assert_eq!(suggest_t_max(&both, 0.01).unwrap(), 9);
        let mismatched = [curve_saturating_at(5, 20, 10), curve_saturating_at(5, 10, 10)];
        assert!(matches!(
            suggest_t_max(&mismatched, 0.01),
            Err(TideError::MismatchedHorizons {
                expected: 20,
                found: 10
            })
        ));
    }
}
