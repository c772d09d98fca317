//! PPO with auxiliary value-network heads.
//!
//! The value network of a PPO agent carries two extra single-layer heads that
//! read its last embedding: one regresses the fraction of variance the value
//! function explains over the current trajectory, the other predicts the next
//! observation under a cosine distance. Their losses are added to the value
//! update only; the policy update is the plain clipped surrogate.
//!
//! Module map:
//!
//! - [`diffcore`]: dense networks, exact reverse-mode gradients, Adam, and a
//!   finite-difference oracle.
//! - [`envs`]: small deterministic environments (dense, sparse, and a
//!   transfer pair sharing one observation/action layout).
//! - [`agent`]: policy distributions and the value trunk with its heads.
//! - [`merl`]: per-trajectory variance explained, segmentation, and the two
//!   head losses.
//! - [`algo`]: rollout collection, GAE, the clipped objective and the
//!   combined update.
//! - [`harness`]: configs, seeded runs, ablation grid, transfer protocol,
//!   seed aggregation and the gradient-check suite.

pub mod agent;
pub mod algo;
pub mod diffcore;
pub mod envs;
mod error;
pub mod harness;
pub mod merl;

pub use agent::{AgentParams, Architecture, HeadToggles, PolicyDistribution};
pub use algo::{HyperParams, RolloutBatch, UpdateStats};
pub use diffcore::{AdamState, MlpParams, ParamGrads};
pub use envs::{Action, ActionSpec, Env, ObservationSpec, StepResult};
pub use error::{Error, Result};
pub use harness::{ExperimentConfig, MetricsRecord};
pub use merl::{EpisodeSegment, MerlTargets};
