//! Car in a valley; the only reward is at the right hilltop.
//!
//! State `(x, v)` with `x` in `[min_position, max_position]`. Each tick, with
//! the throttle `a` clipped to `[-1, 1]`:
//!
//! ```text
//! v' = clip(v + power * a - gravity * cos(3x), -max_speed, max_speed)
//! x' = x + v'                (at the left wall x' is clamped and a leftward v' zeroed)
//! ```
//!
//! Reaching `x' >= goal_position` pays `goal_reward` and ends the
//! episode; every other tick pays 0. The observation is
//! `(x, v / max_speed)`. Episodes start at rest with `x` uniform in
//! `[spawn_low, spawn_high]` and are truncated after `max_steps` ticks.
//!
//! With the default `power = 0.0022` a policy emitting unit-variance Gaussian
//! throttle reaches the goal in roughly one episode out of twenty, while a
//! steady full throttle gets there in under 70 ticks from any spawn.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clipped_continuous, Action, ActionSpec, Env, EnvSpec, EpisodeClock, ObservationSpec, StepResult};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseCarConfig {
    pub power: f64,
    pub gravity: f64,
    pub min_position: f64,
    pub max_position: f64,
    pub max_speed: f64,
    pub goal_position: f64,
    pub goal_reward: f64,
    pub spawn_low: f64,
    pub spawn_high: f64,
    pub max_steps: usize,
}

impl Default for SparseCarConfig {
    fn default() -> Self {
        Self {
            power: 0.0022,
            gravity: 0.0025,
            min_position: -1.2,
            max_position: 0.6,
            max_speed: 0.07,
            goal_position: 0.45,
            goal_reward: 100.0,
            spawn_low: -0.6,
            spawn_high: -0.4,
            max_steps: 500,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SparseCar {
    config: SparseCarConfig,
    position: f64,
    velocity: f64,
    clock: EpisodeClock,
}

impl SparseCar {
    pub fn new(config: SparseCarConfig) -> Result<Self> {
        let c = &config;
        let valid = c.power > 0.0
            && c.max_speed > 0.0
            && c.min_position < c.spawn_low
            && c.spawn_low <= c.spawn_high
            && c.spawn_high < c.goal_position
            && c.goal_position <= c.max_position
            && c.max_steps > 0;
        if !valid {
            return Err(Error::Config(format!("invalid sparse_car config {c:?}")));
        }
        Ok(Self {
            config,
            position: 0.0,
            velocity: 0.0,
            clock: EpisodeClock::default(),
        })
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.position, self.velocity / self.config.max_speed]
    }
}

impl Env for SparseCar {
    fn id(&self) -> &str {
        "sparse_car"
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation: ObservationSpec {
                dim: 2,
                ranges: vec![(self.config.min_position, self.config.max_position), (-1.0, 1.0)],
            },
            action: ActionSpec::Continuous {
                low: vec![-1.0],
                high: vec![1.0],
            },
            max_episode_length: self.config.max_steps,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.position = rng.random_range(self.config.spawn_low..=self.config.spawn_high);
        self.velocity = 0.0;
        self.clock.restart();
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.clock.begin_step(self.id())?;
        let throttle = clipped_continuous(self.id(), action, &[-1.0], &[1.0])?[0];
        let c = &self.config;
        let mut v = self.velocity + c.power * throttle - c.gravity * (3.0 * self.position).cos();
        v = v.clamp(-c.max_speed, c.max_speed);
        let mut x = self.position + v;
        if x < c.min_position {
            x = c.min_position;
            v = v.max(0.0);
        }
        x = x.min(c.max_position);
        self.position = x;
        self.velocity = v;
        let reached = x >= c.goal_position;
        let reward = if reached { c.goal_reward } else { 0.0 };
        let (terminal, truncated) = self.clock.finish_step(reached, c.max_steps);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminal,
            truncated,
        })
    }
}
