use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::AgentParams;
use crate::envs::{Action, Env, EnvSpec};
use crate::{Error, Result};

/// Transitions of every actor, laid out actor after actor (`num_actors`
/// blocks of `horizon` steps).
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutBatch {
    pub obs_dim: usize,
    pub horizon: usize,
    pub num_actors: usize,
    /// Row-major `[N × S]`.
    pub observations: Vec<f64>,
    pub actions: Vec<Action>,
    pub old_log_probs: Vec<f64>,
    pub rewards: Vec<f64>,
    /// Values at collection time.
    pub values: Vec<f64>,
    pub terminal: Vec<bool>,
    pub truncated: Vec<bool>,
    /// Row-major `[N × S]`; the observation actually reached, also on
    /// episode ends.
    pub next_observations: Vec<f64>,
    /// Value of the next observation where the recursion bootstraps from it
    /// (truncation or the last step of a block), else 0.
    pub bootstrap_values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
    /// Undiscounted returns of episodes that finished during collection.
    pub episode_returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn obs(&self, t: usize) -> &[f64] {
        &self.observations[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    pub fn next_obs(&self, t: usize) -> &[f64] {
        &self.next_observations[t * self.obs_dim..(t + 1) * self.obs_dim]
    }

    /// Last step of an actor's block.
    pub fn is_block_tail(&self, t: usize) -> bool {
        (t + 1).is_multiple_of(self.horizon)
    }

    /// True when the advantage recursion must not look past `t`.
    pub fn ends_segment(&self, t: usize) -> bool {
        self.terminal[t] || self.truncated[t] || self.is_block_tail(t)
    }

    /// True when the last segment of the batch bootstraps.
    pub fn tail_bootstrapped(&self) -> bool {
        self.terminal.last().is_some_and(|t| !t)
    }

    /// Checks array lengths and finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.horizon * self.num_actors;
        let s = self.obs_dim;
        let lens = [
            self.observations.len() / s.max(1),
            self.next_observations.len() / s.max(1),
            self.actions.len(),
            self.old_log_probs.len(),
            self.rewards.len(),
            self.values.len(),
            self.terminal.len(),
            self.truncated.len(),
            self.bootstrap_values.len(),
        ];
        if lens.iter().any(|l| *l != n) || self.observations.len() != n * s || self.next_observations.len() != n * s {
            return Err(Error::Usage(format!("rollout arrays do not all have length {n}")));
        }
        if let Some(t) = self.old_log_probs.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("old log-prob at index {t} is not finite")));
        }
        Ok(())
    }
}

/// One environment worker with its own random stream and episode state.
pub struct Actor {
    env: Box<dyn Env>,
    obs: Vec<f64>,
    rng: ChaCha8Rng,
    episode_return: f64,
}

impl Actor {
    pub fn new(mut env: Box<dyn Env>, mut rng: ChaCha8Rng) -> Self {
        let obs = env.reset(rng.random());
        Self {
            env,
            obs,
            rng,
            episode_return: 0.0,
        }
    }

    pub fn spec(&self) -> EnvSpec {
        self.env.spec()
    }

    pub fn env_id(&self) -> &str {
        self.env.id()
    }

    /// Replaces the environment; the next step is the start of an ordinary
    /// new episode. The unfinished episode is dropped.
    pub fn swap_env(&mut self, mut env: Box<dyn Env>) {
        self.obs = env.reset(self.rng.random());
        self.env = env;
        self.episode_return = 0.0;
    }

    pub fn observation(&self) -> &[f64] {
        &self.obs
    }
}

/// Runs every actor for `horizon` steps under fixed `params`.
pub fn collect_rollout(actors: &mut [Actor], params: &AgentParams, horizon: usize) -> Result<RolloutBatch> {
    if actors.is_empty() || horizon == 0 {
        return Err(Error::Usage(
            "collect_rollout needs at least one actor and horizon > 0".into(),
        ));
    }
    let s = params.obs_dim();
    let n = horizon * actors.len();
    let mut b = RolloutBatch {
        obs_dim: s,
        horizon,
        num_actors: actors.len(),
        observations: Vec::with_capacity(n * s),
        actions: Vec::with_capacity(n),
        old_log_probs: Vec::with_capacity(n),
        rewards: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        terminal: Vec::with_capacity(n),
        truncated: Vec::with_capacity(n),
        next_observations: Vec::with_capacity(n * s),
        bootstrap_values: Vec::with_capacity(n),
        advantages: Vec::new(),
        returns: Vec::new(),
        episode_returns: Vec::new(),
    };
    for (i, actor) in actors.iter_mut().enumerate() {
        let id = actor.env.id().to_string();
        for t in 0..horizon {
            let ctx = || format!("actor {i} ({id}) step {t}");
            let (dist, value) = params.act_and_value(&actor.obs).map_err(|e| e.context(ctx()))?;
            let (action, lp) = dist.sample(&mut actor.rng);
            let res = actor.env.step(&action).map_err(|e| e.context(ctx()))?;
            if res.observation.len() != s {
                return Err(Error::Config(format!(
                    "{}: observation width {} != {s}",
                    ctx(),
                    res.observation.len()
                )));
            }
            actor.episode_return += res.reward;
            let bootstrap = if !res.terminal && (res.truncated || t + 1 == horizon) {
                params.value(&res.observation)?
            } else {
                0.0
            };
            b.observations.extend_from_slice(&actor.obs);
            b.actions.push(action);
            b.old_log_probs.push(lp);
            b.rewards.push(res.reward);
            b.values.push(value);
            b.terminal.push(res.terminal);
            b.truncated.push(res.truncated);
            b.next_observations.extend_from_slice(&res.observation);
            b.bootstrap_values.push(bootstrap);
            if res.done() {
                b.episode_returns.push(actor.episode_return);
                actor.episode_return = 0.0;
                actor.obs = actor.env.reset(actor.rng.random());
            } else {
                actor.obs = res.observation;
            }
        }
    }
    b.validate()?;
    Ok(b)
}
