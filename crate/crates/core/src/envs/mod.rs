//! Small deterministic environments.
//!
//! | id             | S  | actions              | reward                         | limit |
//! |----------------|----|----------------------|--------------------------------|-------|
//! | `point_mass_2d`| 4  | continuous, 2-D      | dense, `-‖p - goal‖` per step  | 200   |
//! | `sparse_car`   | 2  | continuous, 1-D      | `+100` on reaching the hilltop | 500   |
//! | `grid_rooms_a` | 20 | discrete, 5          | `+1` per pellet                | 100   |
//! | `grid_rooms_b` | 20 | discrete, 5          | `+1` at the exit, `-0.01`/step | 100   |
//!
//! Every environment is a pure function of its reset seed and the action
//! sequence. Continuous actions are clipped to their bounds inside `step`;
//! out-of-range discrete actions are rejected.

mod grid_rooms;
mod point_mass;
mod sparse_car;

use serde::{Deserialize, Serialize};

pub use grid_rooms::{GridRooms, GridRoomsConfig, GridVariant, GRID_ACTIONS, GRID_OBS_DIM};
pub use point_mass::{
    reference_returns, scripted_controller, solved_threshold, PointMass2D, PointMassConfig, SOLVED_FRACTION,
};
pub use sparse_car::{SparseCar, SparseCarConfig};

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationSpec {
    pub dim: usize,
    /// Nominal `(low, high)` per observation entry.
    pub ranges: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionSpec {
    Continuous { low: Vec<f64>, high: Vec<f64> },
    Discrete { n: usize },
}

impl ActionSpec {
    /// Number of policy outputs: means for continuous, logits for discrete.
    pub fn policy_outputs(&self) -> usize {
        match self {
            ActionSpec::Continuous { low, .. } => low.len(),
            ActionSpec::Discrete { n } => *n,
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self, ActionSpec::Continuous { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ActionSpec::Continuous { low, high } => {
                let ok = !low.is_empty()
                    && low.len() == high.len()
                    && low
                        .iter()
                        .zip(high)
                        .all(|(l, h)| l.is_finite() && h.is_finite() && l < h);
                if ok {
                    Ok(())
                } else {
                    Err(Error::Config(format!("invalid continuous bounds {low:?} / {high:?}")))
                }
            }
            ActionSpec::Discrete { n } if *n >= 2 => Ok(()),
            ActionSpec::Discrete { n } => Err(Error::Config(format!("discrete action space needs n >= 2, got {n}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub observation: ObservationSpec,
    pub action: ActionSpec,
    pub max_episode_length: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Continuous(Vec<f64>),
    Discrete(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub reward: f64,
    /// Ended by the environment's own rule; no bootstrap.
    pub terminal: bool,
    /// Ended by the time limit; bootstrap from `observation`.
    pub truncated: bool,
}

impl StepResult {
    pub fn done(&self) -> bool {
        self.terminal || self.truncated
    }
}

pub trait Env: Send {
    fn id(&self) -> &str;

    fn spec(&self) -> EnvSpec;

    /// Re-initialises the episode as a deterministic function of `seed`.
    fn reset(&mut self, seed: u64) -> Vec<f64>;

    /// Advances one tick. Fails if the episode has ended or was never started.
    fn step(&mut self, action: &Action) -> Result<StepResult>;
}

pub const ENV_IDS: [&str; 4] = ["point_mass_2d", "sparse_car", "grid_rooms_a", "grid_rooms_b"];

/// Builds an environment from its id; `params` overrides documented constants.
pub fn make_env(id: &str, params: &serde_json::Value) -> Result<Box<dyn Env>> {
    let params = if params.is_null() {
        serde_json::Value::Object(Default::default())
    } else {
        params.clone()
    };
    let parse_err = |e: serde_json::Error| Error::Config(format!("env `{id}` params: {e}"));
    Ok(match id {
        "point_mass_2d" => Box::new(PointMass2D::new(serde_json::from_value(params).map_err(parse_err)?)?),
        "sparse_car" => Box::new(SparseCar::new(serde_json::from_value(params).map_err(parse_err)?)?),
        "grid_rooms_a" => Box::new(GridRooms::new(
            GridVariant::A,
            serde_json::from_value(params).map_err(parse_err)?,
        )?),
        "grid_rooms_b" => Box::new(GridRooms::new(
            GridVariant::B,
            serde_json::from_value(params).map_err(parse_err)?,
        )?),
        other => {
            return Err(Error::Config(format!(
                "unknown environment `{other}` (known: {})",
                ENV_IDS.join(", ")
            )))
        }
    })
}

/// Step counter shared by all environments.
#[derive(Clone, Debug, Default)]
pub(crate) struct EpisodeClock {
    steps: usize,
    started: bool,
    ended: bool,
}

impl EpisodeClock {
    pub(crate) fn restart(&mut self) {
        *self = EpisodeClock {
            started: true,
            ..Default::default()
        };
    }

    pub(crate) fn begin_step(&self, env: &str) -> Result<()> {
        if !self.started {
            Err(Error::Usage(format!("{env}: step called before reset")))
        } else if self.ended {
            Err(Error::Usage(format!("{env}: step called after the episode ended")))
        } else {
            Ok(())
        }
    }

    /// Records a tick and returns `(terminal, truncated)`.
    pub(crate) fn finish_step(&mut self, terminal: bool, limit: usize) -> (bool, bool) {
        self.steps += 1;
        let truncated = !terminal && self.steps >= limit;
        self.ended = terminal || truncated;
        (terminal, truncated)
    }
}

pub(crate) fn clipped_continuous(env: &str, action: &Action, low: &[f64], high: &[f64]) -> Result<Vec<f64>> {
    match action {
        Action::Continuous(a) if a.len() == low.len() => {
            if a.iter().any(|v| v.is_nan()) {
                return Err(Error::Usage(format!("{env}: NaN action")));
            }
            Ok(a.iter()
                .zip(low.iter().zip(high))
                .map(|(v, (l, h))| v.clamp(*l, *h))
                .collect())
        }
        Action::Continuous(a) => Err(Error::Usage(format!(
            "{env}: action has {} entries, expected {}",
            a.len(),
            low.len()
        ))),
        Action::Discrete(_) => Err(Error::Usage(format!("{env}: expected a continuous action"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_id_is_config_error() {
        assert!(matches!(
            make_env("cartpole", &serde_json::Value::Null),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn params_override_and_unknown_keys_rejected() {
        let env = make_env("point_mass_2d", &serde_json::json!({"max_steps": 7})).unwrap();
        assert_eq!(env.spec().max_episode_length, 7);
        assert!(make_env("point_mass_2d", &serde_json::json!({"nope": 1})).is_err());
    }

    #[test]
    fn every_env_emits_its_declared_dimension() {
        for id in ENV_IDS {
            let mut env = make_env(id, &serde_json::Value::Null).unwrap();
            let spec = env.spec();
            spec.action.validate().unwrap();
            assert_eq!(env.reset(0).len(), spec.observation.dim, "{id}");
            assert_eq!(spec.observation.ranges.len(), spec.observation.dim);
        }
    }

    #[test]
    fn action_spec_validation() {
        assert!(ActionSpec::Discrete { n: 1 }.validate().is_err());
        assert!(ActionSpec::Continuous {
            low: vec![1.0],
            high: vec![1.0]
        }
        .validate()
        .is_err());
        assert!(ActionSpec::Continuous {
            low: vec![-1.0],
            high: vec![f64::INFINITY]
        }
        .validate()
        .is_err());
    }
}
