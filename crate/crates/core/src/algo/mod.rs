//! Rollout collection, advantage estimation and the combined update.

mod gae;
mod ppo;
mod rollout;

use serde::{Deserialize, Serialize};

pub use gae::{compute_gae, compute_returns, gae_from};
pub use ppo::{
    clip_g, combined_loss, combined_loss_grad, normalize_advantages, ppo_policy_objective, update, value_loss_combined,
    Learner, LossBreakdown, Optimizers,
};
pub use rollout::{collect_rollout, Actor, RolloutBatch};

use crate::{Error, Result};

/// Scalars of one training regime.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperParams {
    pub gamma: f64,
    pub lambda: f64,
    pub clip_eps: f64,
    /// Steps per actor between updates.
    pub horizon: usize,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub lr: f64,
    pub value_coef: f64,
    pub c_ve: f64,
    pub c_fs: f64,
    pub num_actors: usize,
    pub total_steps: u64,
}

impl HyperParams {
    /// Separate networks, one actor, long horizon.
    pub fn control() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.2,
            horizon: 2048,
            epochs: 10,
            minibatch_size: 64,
            lr: 3e-4,
            value_coef: 0.5,
            c_ve: 0.5,
            c_fs: 0.01,
            num_actors: 1,
            total_steps: 200_000,
        }
    }

    /// Shared trunk, four actors, short horizon.
    pub fn shared() -> Self {
        Self {
            gamma: 0.99,
            lambda: 0.95,
            clip_eps: 0.1,
            horizon: 128,
            epochs: 3,
            minibatch_size: 32,
            lr: 2.5e-4,
            value_coef: 0.5,
            c_ve: 0.5,
            c_fs: 0.01,
            num_actors: 4,
            total_steps: 200_000,
        }
    }

    /// Transitions per update.
    pub fn batch_size(&self) -> usize {
        self.horizon * self.num_actors
    }

    /// Number of updates needed to cover `total_steps`.
    pub fn num_updates(&self) -> u64 {
        self.total_steps.div_ceil(self.batch_size() as u64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0, 1], got {}", self.lambda));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps.is_finite()) {
            return bad(format!("clip_eps must be positive, got {}", self.clip_eps));
        }
        if self.horizon == 0 || self.num_actors == 0 || self.minibatch_size == 0 {
            return bad("horizon, num_actors and minibatch_size must be positive".into());
        }
        if !self.batch_size().is_multiple_of(self.minibatch_size) {
            return bad(format!(
                "minibatch_size {} does not divide num_actors * horizon = {}",
                self.minibatch_size,
                self.batch_size()
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        for (name, v) in [
            ("value_coef", self.value_coef),
            ("c_ve", self.c_ve),
            ("c_fs", self.c_fs),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        Ok(())
    }
}

/// Switches outside the core objective.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Features {
    /// Zero mean, unit variance over each update batch.
    pub normalize_advantages: bool,
    /// Global-norm clip per optimiser; `None` disables.
    pub max_grad_norm: Option<f64>,
    pub entropy_coef: f64,
}

impl Default for Features {
    fn default() -> Self {
        Self {
            normalize_advantages: true,
            max_grad_norm: Some(0.5),
            entropy_coef: 0.0,
        }
    }
}

impl Features {
    pub fn validate(&self) -> Result<()> {
        if let Some(m) = self.max_grad_norm {
            if !(m > 0.0 && m.is_finite()) {
                return Err(Error::Config(format!("max_grad_norm must be positive, got {m}")));
            }
        }
        if !self.entropy_coef.is_finite() {
            return Err(Error::Config("entropy_coef must be finite".into()));
        }
        Ok(())
    }
}

/// Statistics of one update, averaged over minibatches unless noted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateStats {
    /// Clipped surrogate (maximised).
    pub policy_objective: f64,
    pub value_mse: f64,
    /// Unweighted; exactly 0 when the head is off.
    pub ve_loss: f64,
    /// Unweighted; exactly 0 when the head is off.
    pub fs_loss: f64,
    pub mean_ratio: f64,
    /// Maximum over the whole update.
    pub max_ratio: f64,
    pub clip_fraction: f64,
    /// Pre-clip global norms.
    pub policy_grad_norm: f64,
    pub value_grad_norm: f64,
    pub entropy: f64,
    pub minibatches: usize,
}
