//! Continuous 2-D point mass steered towards a fixed goal.
//!
//! State `(px, py, vx, vy)`; the arena is `[-1, 1]^2`. Each tick, with the
//! force `f` clipped to `[-max_force, max_force]^2`:
//!
//! ```text
//! v' = clip(v + dt * (f - damping * v), -max_speed, max_speed)
//! p' = p + dt * v'           (an axis hitting a wall is clamped and its velocity zeroed)
//! r  = -|p' - goal|
//! ```
//!
//! Episodes start at rest with each coordinate uniform in
//! `[-spawn_half_width, spawn_half_width]` and are truncated after
//! `max_steps` ticks. There is no terminal state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{clipped_continuous, Action, ActionSpec, Env, EnvSpec, EpisodeClock, ObservationSpec, StepResult};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointMassConfig {
    pub dt: f64,
    pub max_force: f64,
    pub damping: f64,
    pub max_speed: f64,
    pub goal: [f64; 2],
    pub spawn_half_width: f64,
    pub max_steps: usize,
}

impl Default for PointMassConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            max_force: 1.0,
            damping: 0.5,
            max_speed: 1.0,
            goal: [0.0, 0.0],
            spawn_half_width: 1.0,
            max_steps: 200,
        }
    }
}

#[derive(Clone, Debug)]
pub struct PointMass2D {
    config: PointMassConfig,
    pos: [f64; 2],
    vel: [f64; 2],
    clock: EpisodeClock,
}

impl PointMass2D {
    pub fn new(config: PointMassConfig) -> Result<Self> {
        let c = &config;
        let valid = c.dt > 0.0
            && c.max_force > 0.0
            && c.damping >= 0.0
            && c.max_speed > 0.0
            && (0.0..=1.0).contains(&c.spawn_half_width)
            && c.goal.iter().all(|g| g.abs() <= 1.0)
            && c.max_steps > 0;
        if !valid {
            return Err(Error::Config(format!("invalid point_mass_2d config {c:?}")));
        }
        Ok(Self {
            config,
            pos: [0.0; 2],
            vel: [0.0; 2],
            clock: EpisodeClock::default(),
        })
    }

    fn observation(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }

    fn distance_to_goal(&self) -> f64 {
        let dx = self.pos[0] - self.config.goal[0];
        let dy = self.pos[1] - self.config.goal[1];
        dx.hypot(dy)
    }

    pub fn config(&self) -> &PointMassConfig {
        &self.config
    }
}

impl Env for PointMass2D {
    fn id(&self) -> &str {
        "point_mass_2d"
    }

    fn spec(&self) -> EnvSpec {
        let s = self.config.max_speed;
        EnvSpec {
            observation: ObservationSpec {
                dim: 4,
                ranges: vec![(-1.0, 1.0), (-1.0, 1.0), (-s, s), (-s, s)],
            },
            action: ActionSpec::Continuous {
                low: vec![-1.0; 2],
                high: vec![1.0; 2],
            },
            max_episode_length: self.config.max_steps,
        }
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = self.config.spawn_half_width;
        self.pos = [rng.random_range(-w..=w), rng.random_range(-w..=w)];
        self.vel = [0.0; 2];
        self.clock.restart();
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.clock.begin_step(self.id())?;
        let force = clipped_continuous(self.id(), action, &[-1.0; 2], &[1.0; 2])?;
        let c = &self.config;
        for (i, f) in force.iter().enumerate() {
            let f = f * c.max_force;
            let v = (self.vel[i] + c.dt * (f - c.damping * self.vel[i])).clamp(-c.max_speed, c.max_speed);
            let p = self.pos[i] + c.dt * v;
            if p.abs() > 1.0 {
                self.pos[i] = p.clamp(-1.0, 1.0);
                self.vel[i] = 0.0;
            } else {
                self.pos[i] = p;
                self.vel[i] = v;
            }
        }
        let reward = -self.distance_to_goal();
        let (terminal, truncated) = self.clock.finish_step(false, c.max_steps);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminal,
            truncated,
        })
    }
}

/// Hand-tuned PD controller used as the reference for the solved threshold.
pub fn scripted_controller(config: &PointMassConfig, obs: &[f64]) -> Vec<f64> {
    const KP: f64 = 4.0;
    const KD: f64 = 3.0;
    (0..2)
        .map(|i| (-(KP * (obs[i] - config.goal[i])) - KD * obs[2 + i]).clamp(-1.0, 1.0))
        .collect()
}

/// Fraction of the gap between the zero action and the scripted controller
/// that counts as solved.
pub const SOLVED_FRACTION: f64 = 0.75;

/// Mean episode return of the zero action and of [`scripted_controller`]
/// over reset seeds `0..episodes`.
pub fn reference_returns(config: &PointMassConfig, episodes: u64) -> Result<(f64, f64)> {
    let mut totals = [0.0; 2];
    for (k, total) in totals.iter_mut().enumerate() {
        for seed in 0..episodes {
            let mut env = PointMass2D::new(config.clone())?;
            let mut obs = env.reset(seed);
            loop {
                let force = if k == 0 {
                    vec![0.0; 2]
                } else {
                    scripted_controller(config, &obs)
                };
                let r = env.step(&Action::Continuous(force))?;
                *total += r.reward;
                if r.done() {
                    break;
                }
                obs = r.observation;
            }
        }
    }
    let n = episodes.max(1) as f64;
    Ok((totals[0] / n, totals[1] / n))
}

/// Rolling return above which a policy counts as solving the task:
/// `zero + SOLVED_FRACTION * (scripted - zero)`.
pub fn solved_threshold(config: &PointMassConfig, episodes: u64) -> Result<f64> {
    let (zero, scripted) = reference_returns(config, episodes)?;
    Ok(zero + SOLVED_FRACTION * (scripted - zero))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> PointMass2D {
        PointMass2D::new(PointMassConfig::default()).unwrap()
    }

    #[test]
    fn scripted_controller_beats_zero_action() {
        let (zero, scripted) = reference_returns(&PointMassConfig::default(), 100).unwrap();
        assert!(scripted > zero + 100.0, "{zero} {scripted}");
        let t = solved_threshold(&PointMassConfig::default(), 100).unwrap();
        assert!(zero < t && t < scripted);
        eprintln!("zero {zero} scripted {scripted} threshold {t}");
    }

    #[test]
    fn same_seed_same_start() {
        let mut a = env();
        let mut b = env();
        assert_eq!(a.reset(11), b.reset(11));
        assert_ne!(a.reset(11), a.reset(12));
    }

    #[test]
    fn spawn_inside_region_at_rest() {
        let mut e = env();
        for seed in 0..50 {
            let obs = e.reset(seed);
            assert!(obs[0].abs() <= 1.0 && obs[1].abs() <= 1.0);
            assert_eq!(&obs[2..], &[0.0, 0.0]);
        }
    }

    #[test]
    fn zero_action_from_rest_keeps_position() {
        let mut e = env();
        let obs = e.reset(0);
        let r = e.step(&Action::Continuous(vec![0.0, 0.0])).unwrap();
        assert_eq!(r.observation, obs);
        assert_eq!(r.reward, -obs[0].hypot(obs[1]));
        assert!(!r.terminal && !r.truncated);
    }

    #[test]
    fn actions_are_clipped_not_rejected() {
        let mut a = env();
        let mut b = env();
        a.reset(2);
        b.reset(2);
        let ra = a.step(&Action::Continuous(vec![50.0, -9.0])).unwrap();
        let rb = b.step(&Action::Continuous(vec![1.0, -1.0])).unwrap();
        assert_eq!(ra, rb);
    }

    #[test]
    fn truncates_exactly_at_limit_then_refuses() {
        let mut e = PointMass2D::new(PointMassConfig {
            max_steps: 5,
            ..Default::default()
        })
        .unwrap();
        e.reset(1);
        for t in 1..=5 {
            let r = e.step(&Action::Continuous(vec![0.3, 0.3])).unwrap();
            assert_eq!(r.truncated, t == 5);
            assert!(!r.terminal);
        }
        assert!(matches!(
            e.step(&Action::Continuous(vec![0.0, 0.0])),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn wrong_action_shape_is_usage_error() {
        let mut e = env();
        e.reset(0);
        assert!(e.step(&Action::Discrete(1)).is_err());
        assert!(e.step(&Action::Continuous(vec![0.0])).is_err());
    }

    #[test]
    fn controller_reaches_goal() {
        let mut e = env();
        let mut obs = e.reset(4);
        for _ in 0..100 {
            let a = scripted_controller(e.config(), &obs);
            obs = e.step(&Action::Continuous(a)).unwrap().observation;
        }
        assert!(obs[0].hypot(obs[1]) < 0.02, "{obs:?}");
    }
}
