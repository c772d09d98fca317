//! Fraction of variance explained, episode segmentation, and the two head
//! losses.
//!
//! For an episode segment with returns `R̂` and rollout-time values `V`:
//!
//! ```text
//! vex = 1 - Σ (R̂_t - V_t)² / Σ (R̂_t - mean(R̂))²
//! ```
//!
//! `vex` is at most 1 and may be negative. It is undefined for segments
//! shorter than two steps or with (nearly) constant returns; those segments
//! are masked out of the VE loss.

use serde::{Deserialize, Serialize};

/// Denominators below this are treated as zero.
pub const VEX_DENOM_TOL: f64 = 1e-8;
/// Added to each norm in the cosine distance.
pub const COSINE_EPS: f64 = 1e-8;

/// Inclusive index range of one episode piece inside a rollout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeSegment {
    pub start: usize,
    pub end: usize,
    /// True when the segment was cut by a time limit or the horizon rather
    /// than by a terminal state.
    pub bootstrapped: bool,
}

impl EpisodeSegment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

/// Per-timestep training targets for the auxiliary heads.
#[derive(Clone, Debug, PartialEq)]
pub struct MerlTargets {
    pub obs_dim: usize,
    /// Segment-level `vex`, broadcast to every member; 0 where masked.
    pub vex: Vec<f64>,
    pub vex_valid: Vec<bool>,
    /// Row-major `[T × S]`.
    pub next_obs: Vec<f64>,
    pub fs_valid: Vec<bool>,
}

impl MerlTargets {
    pub fn len(&self) -> usize {
        self.vex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vex.is_empty()
    }

    pub fn next_obs_row(&self, t: usize) -> &[f64] {
        &self.next_obs[t * self.obs_dim..(t + 1) * self.obs_dim]
    }
}

/// Summary of `vex` over the segments of one rollout.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VexStats {
    pub mean: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Fraction of segments whose `vex` is undefined.
    pub masked_fraction: f64,
    pub segments: usize,
}

/// `vex` of one segment, or `None` when undefined.
pub fn compute_vex(returns: &[f64], values: &[f64]) -> Option<f64> {
    if returns.len() != values.len() || returns.len() < 2 {
        return None;
    }
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let denom: f64 = returns.iter().map(|r| (r - mean) * (r - mean)).sum();
    if denom.is_nan() || denom < VEX_DENOM_TOL {
        return None;
    }
    let resid: f64 = returns.iter().zip(values).map(|(r, v)| (r - v) * (r - v)).sum();
    let vex = 1.0 - resid / denom;
    vex.is_finite().then_some(vex)
}

/// Splits `[0, N)` into episode pieces. A piece ends at a terminal step, a
/// truncated step, or the last step of an actor's horizon (`N` must be a
/// multiple of `horizon`, actors laid out back to back).
pub fn segment_flags(terminal: &[bool], truncated: &[bool], horizon: usize) -> Vec<EpisodeSegment> {
    let n = terminal.len();
    let mut segments = Vec::new();
    let mut start = 0;
    for t in 0..n {
        let tail = horizon > 0 && (t + 1) % horizon == 0;
        if terminal[t] || truncated[t] || tail || t + 1 == n {
            segments.push(EpisodeSegment {
                start,
                end: t,
                bootstrapped: !terminal[t],
            });
            start = t + 1;
        }
    }
    segments
}

/// Segments of a collected rollout.
pub fn segment_rollout(batch: &crate::algo::RolloutBatch) -> Vec<EpisodeSegment> {
    segment_flags(&batch.terminal, &batch.truncated, batch.horizon)
}

/// Builds head targets from the batch's returns and rollout-time values.
pub fn build_merl_targets(batch: &crate::algo::RolloutBatch, segments: &[EpisodeSegment]) -> MerlTargets {
    build_targets_from(
        &batch.returns,
        &batch.values,
        &batch.terminal,
        &batch.next_observations,
        batch.obs_dim,
        segments,
    )
}

/// As [`build_merl_targets`], from the raw arrays.
pub fn build_targets_from(
    returns: &[f64],
    values: &[f64],
    terminal: &[bool],
    next_obs: &[f64],
    obs_dim: usize,
    segments: &[EpisodeSegment],
) -> MerlTargets {
    let n = returns.len();
    let mut vex = vec![0.0; n];
    let mut vex_valid = vec![false; n];
    for seg in segments {
        if let Some(v) = compute_vex(&returns[seg.range()], &values[seg.range()]) {
            vex[seg.range()].fill(v);
            vex_valid[seg.range()].fill(true);
        }
    }
    MerlTargets {
        obs_dim,
        vex,
        vex_valid,
        next_obs: next_obs.to_vec(),
        fs_valid: terminal.iter().map(|t| !t).collect(),
    }
}

pub fn vex_stats(returns: &[f64], values: &[f64], segments: &[EpisodeSegment]) -> VexStats {
    let defined: Vec<f64> = segments
        .iter()
        .filter_map(|s| compute_vex(&returns[s.range()], &values[s.range()]))
        .collect();
    let masked_fraction = if segments.is_empty() {
        0.0
    } else {
        (segments.len() - defined.len()) as f64 / segments.len() as f64
    };
    if defined.is_empty() {
        return VexStats {
            masked_fraction,
            segments: segments.len(),
            ..VexStats::default()
        };
    }
    VexStats {
        mean: Some(defined.iter().sum::<f64>() / defined.len() as f64),
        min: defined.iter().copied().reduce(f64::min),
        max: defined.iter().copied().reduce(f64::max),
        masked_fraction,
        segments: segments.len(),
    }
}

/// Masked mean squared error of VE predictions; `preds[k]` belongs to
/// timestep `idx[k]`.
pub fn ve_loss(preds: &[f64], targets: &MerlTargets, idx: &[usize]) -> f64 {
    ve_loss_grad(preds, targets, idx).0
}

/// Loss and its derivative with respect to each prediction.
pub fn ve_loss_grad(preds: &[f64], targets: &MerlTargets, idx: &[usize]) -> (f64, Vec<f64>) {
    let valid = idx.iter().filter(|&&t| targets.vex_valid[t]).count();
    let mut grad = vec![0.0; preds.len()];
    if valid == 0 {
        return (0.0, grad);
    }
    let inv = 1.0 / valid as f64;
    let mut loss = 0.0;
    for (k, (&t, p)) in idx.iter().zip(preds).enumerate() {
        if targets.vex_valid[t] {
            let d = p - targets.vex[t];
            loss += d * d;
            grad[k] = 2.0 * d * inv;
        }
    }
    (loss * inv, grad)
}

/// `1 - cos(pred, target)` with guarded norms, and its gradient in `pred`.
pub fn cosine_distance(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let pn = pred.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tn = target.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dot: f64 = pred.iter().zip(target).map(|(a, b)| a * b).sum();
    let a = pn + COSINE_EPS;
    let b = tn + COSINE_EPS;
    let loss = 1.0 - dot / (a * b);
    let radial = if pn > 0.0 { dot / (pn * a * a * b) } else { 0.0 };
    let grad = pred
        .iter()
        .zip(target)
        .map(|(p, s)| -s / (a * b) + radial * p)
        .collect();
    (loss, grad)
}

/// Masked mean cosine distance of next-state predictions.
pub fn fs_loss(preds: &[Vec<f64>], targets: &MerlTargets, idx: &[usize]) -> f64 {
    fs_loss_grad(preds, targets, idx).0
}

pub fn fs_loss_grad(preds: &[Vec<f64>], targets: &MerlTargets, idx: &[usize]) -> (f64, Vec<Vec<f64>>) {
    let valid = idx.iter().filter(|&&t| targets.fs_valid[t]).count();
    let mut grad: Vec<Vec<f64>> = preds.iter().map(|p| vec![0.0; p.len()]).collect();
    if valid == 0 {
        return (0.0, grad);
    }
    let inv = 1.0 / valid as f64;
    let mut loss = 0.0;
    for (k, (&t, p)) in idx.iter().zip(preds).enumerate() {
        if targets.fs_valid[t] {
            let (l, g) = cosine_distance(p, targets.next_obs_row(t));
            loss += l;
            grad[k] = g.into_iter().map(|x| x * inv).collect();
        }
    }
    (loss * inv, grad)
}
