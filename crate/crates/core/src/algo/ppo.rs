use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Features, HyperParams, RolloutBatch, UpdateStats};
use crate::agent::{AgentGrads, AgentParams, Architecture, HeadToggles, OutputGrads, ParamGroup};
use crate::diffcore::{adam_step_flat, AdamConfig, AdamState};
use crate::merl::{cosine_distance, MerlTargets};
use crate::{Error, Result};

/// `(1 + ε)·A` for `A ≥ 0`, else `(1 − ε)·A`.
pub fn clip_g(eps: f64, a: f64) -> f64 {
    if a >= 0.0 {
        (1.0 + eps) * a
    } else {
        (1.0 - eps) * a
    }
}

/// Zero mean, unit (population) variance. A constant input is only centred.
pub fn normalize_advantages(adv: &[f64]) -> Vec<f64> {
    if adv.is_empty() {
        return Vec::new();
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 1e-12 {
        adv.iter().map(|a| (a - mean) / std).collect()
    } else {
        adv.iter().map(|a| a - mean).collect()
    }
}

/// Every term of the combined minibatch objective.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Clipped surrogate, to be maximised.
    pub policy_objective: f64,
    pub entropy: f64,
    pub value_mse: f64,
    pub ve_loss: f64,
    pub fs_loss: f64,
    /// `value_coef·mse + c_ve·ve + c_fs·fs` (enabled heads only).
    pub value_total: f64,
    /// `−objective − entropy_coef·entropy + value_total`, minimised.
    pub total: f64,
    pub mean_ratio: f64,
    pub max_ratio: f64,
    pub clip_fraction: f64,
}

fn check_idx(batch: &RolloutBatch, idx: &[usize]) -> Result<()> {
    if idx.is_empty() {
        return Err(Error::Usage("empty minibatch".into()));
    }
    if let Some(bad) = idx.iter().find(|&&t| t >= batch.len()) {
        return Err(Error::Usage(format!(
            "minibatch index {bad} outside a batch of {}",
            batch.len()
        )));
    }
    Ok(())
}

struct RatioTerm {
    ratio: f64,
    surrogate: f64,
    unclipped: bool,
}

fn ratio_term(new_lp: f64, old_lp: f64, a: f64, eps: f64, t: usize) -> Result<RatioTerm> {
    let ratio = (new_lp - old_lp).exp();
    if !ratio.is_finite() {
        return Err(Error::Numerical(format!(
            "probability ratio {ratio} at transition {t} (log-probs {new_lp} vs {old_lp})"
        )));
    }
    let unclipped_val = ratio * a;
    let clipped_val = clip_g(eps, a);
    let unclipped = unclipped_val <= clipped_val;
    Ok(RatioTerm {
        ratio,
        surrogate: if unclipped { unclipped_val } else { clipped_val },
        unclipped,
    })
}

#[derive(Default)]
struct RatioAcc {
    sum: f64,
    max: f64,
    clipped: usize,
}

impl RatioAcc {
    fn push(&mut self, ratio: f64, eps: f64) {
        self.sum += ratio;
        self.max = self.max.max(ratio);
        if (ratio - 1.0).abs() > eps {
            self.clipped += 1;
        }
    }
}

/// Mean clipped surrogate over `idx`; `advantages` is indexed by timestep.
pub fn ppo_policy_objective(
    batch: &RolloutBatch,
    params: &AgentParams,
    idx: &[usize],
    advantages: &[f64],
    eps: f64,
) -> Result<(f64, LossBreakdown)> {
    check_idx(batch, idx)?;
    let m = idx.len() as f64;
    let mut obj = 0.0;
    let mut entropy = 0.0;
    let mut acc = RatioAcc::default();
    for &t in idx {
        let dist = params.policy_distribution(batch.obs(t))?;
        let lp = dist.log_prob(&batch.actions[t])?;
        let r = ratio_term(lp, batch.old_log_probs[t], advantages[t], eps, t)?;
        obj += r.surrogate;
        entropy += dist.entropy();
        acc.push(r.ratio, eps);
    }
    let bd = LossBreakdown {
        policy_objective: obj / m,
        entropy: entropy / m,
        mean_ratio: acc.sum / m,
        max_ratio: acc.max,
        clip_fraction: acc.clipped as f64 / m,
        ..LossBreakdown::default()
    };
    Ok((bd.policy_objective, bd))
}

/// Value regression plus the enabled head losses.
pub fn value_loss_combined(
    batch: &RolloutBatch,
    params: &AgentParams,
    targets: &MerlTargets,
    idx: &[usize],
    hyper: &HyperParams,
    heads: HeadToggles,
) -> Result<(f64, LossBreakdown)> {
    check_idx(batch, idx)?;
    let m = idx.len() as f64;
    let mut mse = 0.0;
    let mut ve_preds = Vec::with_capacity(idx.len());
    let mut fs_preds = Vec::with_capacity(idx.len());
    for &t in idx {
        let out = params.value_and_heads(batch.obs(t))?;
        let d = out.value - batch.returns[t];
        mse += d * d;
        ve_preds.push(out.ve_pred);
        fs_preds.push(out.fs_pred);
    }
    let mut bd = LossBreakdown {
        value_mse: mse / m,
        ..LossBreakdown::default()
    };
    bd.value_total = hyper.value_coef * bd.value_mse;
    if heads.ve {
        bd.ve_loss = crate::merl::ve_loss(&ve_preds, targets, idx);
        bd.value_total += hyper.c_ve * bd.ve_loss;
    }
    if heads.fs {
        bd.fs_loss = crate::merl::fs_loss(&fs_preds, targets, idx);
        bd.value_total += hyper.c_fs * bd.fs_loss;
    }
    Ok((bd.value_total, bd))
}

/// The full minimised objective of one minibatch.
#[allow(clippy::too_many_arguments)]
pub fn combined_loss(
    batch: &RolloutBatch,
    targets: &MerlTargets,
    params: &AgentParams,
    idx: &[usize],
    advantages: &[f64],
    hyper: &HyperParams,
    heads: HeadToggles,
    features: &Features,
) -> Result<LossBreakdown> {
    let (_, p) = ppo_policy_objective(batch, params, idx, advantages, hyper.clip_eps)?;
    let (_, v) = value_loss_combined(batch, params, targets, idx, hyper, heads)?;
    Ok(LossBreakdown {
        value_mse: v.value_mse,
        ve_loss: v.ve_loss,
        fs_loss: v.fs_loss,
        value_total: v.value_total,
        total: -p.policy_objective - features.entropy_coef * p.entropy + v.value_total,
        ..p
    })
}

/// [`combined_loss`] and its exact gradient, from one forward pass per
/// transition.
#[allow(clippy::too_many_arguments)]
pub fn combined_loss_grad(
    batch: &RolloutBatch,
    targets: &MerlTargets,
    params: &AgentParams,
    idx: &[usize],
    advantages: &[f64],
    hyper: &HyperParams,
    heads: HeadToggles,
    features: &Features,
) -> Result<(LossBreakdown, AgentGrads)> {
    check_idx(batch, idx)?;
    let m = idx.len() as f64;
    let eps = hyper.clip_eps;
    let ve_valid = idx.iter().filter(|&&t| targets.vex_valid[t]).count();
    let fs_valid = idx.iter().filter(|&&t| targets.fs_valid[t]).count();
    let mut grads = AgentGrads::zeros_like(params);
    let mut acc = RatioAcc::default();
    let (mut obj, mut entropy, mut mse, mut ve, mut fs) = (0.0, 0.0, 0.0, 0.0, 0.0);

    for &t in idx {
        let fwd = params.forward_train(batch.obs(t), heads)?;
        let action = &batch.actions[t];
        let lp = fwd.dist.log_prob(action)?;
        let r = ratio_term(lp, batch.old_log_probs[t], advantages[t], eps, t)?;
        obj += r.surrogate;
        entropy += fwd.dist.entropy();
        acc.push(r.ratio, eps);

        let mut g = OutputGrads::default();
        let d_lp = if r.unclipped { -r.ratio * advantages[t] / m } else { 0.0 };
        let (d_out, d_std) = fwd.dist.log_prob_grad(action)?;
        g.policy_out = d_out.iter().map(|d| d_lp * d).collect();
        g.log_std = d_std.iter().map(|d| d_lp * d).collect();
        if features.entropy_coef != 0.0 {
            let k = -features.entropy_coef / m;
            let (e_out, e_std) = fwd.dist.entropy_grad();
            g.policy_out.iter_mut().zip(&e_out).for_each(|(a, b)| *a += k * b);
            g.log_std.iter_mut().zip(&e_std).for_each(|(a, b)| *a += k * b);
        }

        let dv = fwd.value - batch.returns[t];
        mse += dv * dv;
        g.value = 2.0 * hyper.value_coef * dv / m;

        if let Some(pred) = fwd.ve_pred {
            if targets.vex_valid[t] {
                let d = pred - targets.vex[t];
                ve += d * d;
                g.ve = hyper.c_ve * 2.0 * d / ve_valid as f64;
            }
        }
        if let Some(pred) = &fwd.fs_pred {
            if targets.fs_valid[t] {
                let (l, dg) = cosine_distance(pred, targets.next_obs_row(t));
                fs += l;
                let k = hyper.c_fs / fs_valid as f64;
                g.fs = dg.iter().map(|x| k * x).collect();
            } else {
                g.fs = vec![0.0; pred.len()];
            }
        }
        params.backward_train(&fwd, &g, &mut grads)?;
    }

    let mut bd = LossBreakdown {
        policy_objective: obj / m,
        entropy: entropy / m,
        value_mse: mse / m,
        mean_ratio: acc.sum / m,
        max_ratio: acc.max,
        clip_fraction: acc.clipped as f64 / m,
        ..LossBreakdown::default()
    };
    bd.value_total = hyper.value_coef * bd.value_mse;
    if heads.ve {
        bd.ve_loss = if ve_valid > 0 { ve / ve_valid as f64 } else { 0.0 };
        bd.value_total += hyper.c_ve * bd.ve_loss;
    }
    if heads.fs {
        bd.fs_loss = if fs_valid > 0 { fs / fs_valid as f64 } else { 0.0 };
        bd.value_total += hyper.c_fs * bd.fs_loss;
    }
    bd.total = -bd.policy_objective - features.entropy_coef * bd.entropy + bd.value_total;
    Ok((bd, grads))
}

/// Adam state: one optimiser per network in the separate architecture, one
/// over everything with a shared trunk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizers {
    Separate { policy: AdamState, value: AdamState },
    Shared { all: AdamState },
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn clip_in_place(g: &mut [f64], max_norm: Option<f64>, norm: f64) {
    if let Some(max) = max_norm {
        let coef = max / (norm + 1e-6);
        if coef < 1.0 {
            g.iter_mut().for_each(|x| *x *= coef);
        }
    }
}

impl Optimizers {
    pub fn new(params: &AgentParams) -> Self {
        let cfg = AdamConfig::default();
        match params.architecture {
            Architecture::Separate => Optimizers::Separate {
                policy: AdamState::new(params.num_params(ParamGroup::Policy), cfg),
                value: AdamState::new(params.num_params(ParamGroup::Value), cfg),
            },
            Architecture::SharedTrunk => Optimizers::Shared {
                all: AdamState::new(params.num_params(ParamGroup::All), cfg),
            },
        }
    }

    /// Clips and applies `grads`; returns the pre-clip policy and value norms.
    pub fn step(
        &mut self,
        params: &mut AgentParams,
        grads: &AgentGrads,
        lr: f64,
        max_grad_norm: Option<f64>,
    ) -> Result<(f64, f64)> {
        let apply = |params: &mut AgentParams, group: ParamGroup, g: &[f64], state: &mut AdamState| -> Result<()> {
            if let Some(i) = g.iter().position(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!(
                    "non-finite gradient {} at {}",
                    g[i],
                    params.locate(group, i)
                )));
            }
            let mut flat = params.to_flat(group);
            adam_step_flat(&mut flat, g, state, lr)?;
            params.set_flat(group, &flat)
        };
        let gp = grads.to_flat(ParamGroup::Policy);
        let gv = grads.to_flat(ParamGroup::Value);
        let (np, nv) = (norm(&gp), norm(&gv));
        match self {
            Optimizers::Separate { policy, value } => {
                let (mut gp, mut gv) = (gp, gv);
                clip_in_place(&mut gp, max_grad_norm, np);
                clip_in_place(&mut gv, max_grad_norm, nv);
                apply(params, ParamGroup::Policy, &gp, policy)?;
                apply(params, ParamGroup::Value, &gv, value)?;
            }
            Optimizers::Shared { all } => {
                let mut g = grads.to_flat(ParamGroup::All);
                let n = norm(&g);
                clip_in_place(&mut g, max_grad_norm, n);
                apply(params, ParamGroup::All, &g, all)?;
            }
        }
        Ok((np, nv))
    }

    /// SHA-256 of the moment buffers and step counters.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        let states: Vec<&AdamState> = match self {
            Optimizers::Separate { policy, value } => vec![policy, value],
            Optimizers::Shared { all } => vec![all],
        };
        for s in states {
            h.update(s.step.to_le_bytes());
            for v in s.first_moment.iter().chain(&s.second_moment) {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

/// Parameters together with their optimiser state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Learner {
    pub params: AgentParams,
    pub optim: Optimizers,
}

impl Learner {
    pub fn new(params: AgentParams) -> Self {
        let optim = Optimizers::new(&params);
        Self { params, optim }
    }
}

/// Runs `epochs` shuffled passes of minibatch steps over `batch`, whose
/// advantages and returns must already be filled in.
#[allow(clippy::too_many_arguments)]
pub fn update<R: Rng + ?Sized>(
    batch: &RolloutBatch,
    targets: &MerlTargets,
    learner: &mut Learner,
    hyper: &HyperParams,
    heads: HeadToggles,
    features: &Features,
    rng: &mut R,
) -> Result<UpdateStats> {
    let n = batch.len();
    if batch.advantages.len() != n || batch.returns.len() != n || targets.len() != n {
        return Err(Error::Usage(
            "advantages, returns and targets must be computed before the update".into(),
        ));
    }
    if hyper.minibatch_size == 0 || !n.is_multiple_of(hyper.minibatch_size) {
        return Err(Error::Config(format!(
            "minibatch_size {} does not divide the batch of {n}",
            hyper.minibatch_size
        )));
    }
    let adv = if features.normalize_advantages {
        normalize_advantages(&batch.advantages)
    } else {
        batch.advantages.clone()
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut stats = UpdateStats::default();
    let mut count = 0usize;
    for epoch in 0..hyper.epochs {
        order.shuffle(rng);
        for (k, idx) in order.chunks(hyper.minibatch_size).enumerate() {
            let (bd, grads) = combined_loss_grad(batch, targets, &learner.params, idx, &adv, hyper, heads, features)?;
            if !bd.total.is_finite() {
                return Err(Error::Numerical(format!(
                    "non-finite loss at epoch {epoch}, minibatch {k}: {bd:?}"
                )));
            }
            let (np, nv) = learner
                .optim
                .step(&mut learner.params, &grads, hyper.lr, features.max_grad_norm)
                .map_err(|e| e.context(format!("epoch {epoch}, minibatch {k}")))?;
            stats.policy_objective += bd.policy_objective;
            stats.value_mse += bd.value_mse;
            stats.ve_loss += bd.ve_loss;
            stats.fs_loss += bd.fs_loss;
            stats.mean_ratio += bd.mean_ratio;
            stats.max_ratio = stats.max_ratio.max(bd.max_ratio);
            stats.clip_fraction += bd.clip_fraction;
            stats.policy_grad_norm += np;
            stats.value_grad_norm += nv;
            stats.entropy += bd.entropy;
            count += 1;
        }
    }
    if count > 0 {
        let c = count as f64;
        for v in [
            &mut stats.policy_objective,
            &mut stats.value_mse,
            &mut stats.ve_loss,
            &mut stats.fs_loss,
            &mut stats.mean_ratio,
            &mut stats.clip_fraction,
            &mut stats.policy_grad_norm,
            &mut stats.value_grad_norm,
            &mut stats.entropy,
        ] {
            *v /= c;
        }
    }
    stats.minibatches = count;
    Ok(stats)
}
