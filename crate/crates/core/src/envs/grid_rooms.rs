//! Two-room gridworld in two reward variants sharing one observation and
//! action layout.
//!
//! ```text
//! #########
//! #.a.#..a#      a  pellet (variant A)
//! #.......#      G  exit (variant B)
//! #..a#...#      S  spawn
//! #...#.a.#
//! #S..#a.G#
//! #########
//! ```
//!
//! Actions: `0` stay, `1` up, `2` down, `3` left, `4` right. Moving into a
//! wall leaves the agent in place.
//!
//! - Variant A pays `pellet_reward` per pellet collected and ends when all
//!   pellets are gone; other ticks pay `step_reward_a`.
//! - Variant B pays `exit_reward` on reaching the exit, which ends the
//!   episode; other ticks pay `step_reward_b`.
//!
//! Observation (S = 20): a 3x3 wall view around the agent (row-major), a 3x3
//! item view (pellets in A, the exit in B), then `row / (H - 1)` and
//! `col / (W - 1)`. Every entry lies in `[0, 1]`. Resets always place the
//! agent on `S`; the seed does not change the layout.

use serde::{Deserialize, Serialize};

use super::{Action, ActionSpec, Env, EnvSpec, EpisodeClock, ObservationSpec, StepResult};
use crate::{Error, Result};

const LAYOUT: [&str; 7] = [
    "#########",
    "#.a.#..a#",
    "#.......#",
    "#..a#...#",
    "#...#.a.#",
    "#S..#a.G#",
    "#########",
];
const HEIGHT: usize = LAYOUT.len();
const WIDTH: usize = 9;
pub const GRID_OBS_DIM: usize = 20;
pub const GRID_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum GridVariant {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridRoomsConfig {
    pub max_steps: usize,
    pub pellet_reward: f64,
    pub step_reward_a: f64,
    pub exit_reward: f64,
    pub step_reward_b: f64,
}

impl Default for GridRoomsConfig {
    fn default() -> Self {
        Self {
            max_steps: 100,
            pellet_reward: 1.0,
            step_reward_a: 0.0,
            exit_reward: 1.0,
            step_reward_b: -0.01,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GridRooms {
    variant: GridVariant,
    config: GridRoomsConfig,
    walls: [[bool; WIDTH]; HEIGHT],
    items: [[bool; WIDTH]; HEIGHT],
    spawn: (usize, usize),
    agent: (usize, usize),
    clock: EpisodeClock,
}

impl GridRooms {
    pub fn new(variant: GridVariant, config: GridRoomsConfig) -> Result<Self> {
        if config.max_steps == 0 {
            return Err(Error::Config("grid_rooms max_steps must be > 0".into()));
        }
        let mut walls = [[false; WIDTH]; HEIGHT];
        let mut spawn = (0, 0);
        for (r, row) in LAYOUT.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                walls[r][c] = ch == '#';
                if ch == 'S' {
                    spawn = (r, c);
                }
            }
        }
        let mut env = Self {
            variant,
            config,
            walls,
            items: [[false; WIDTH]; HEIGHT],
            spawn,
            agent: spawn,
            clock: EpisodeClock::default(),
        };
        env.place_items();
        Ok(env)
    }

    fn place_items(&mut self) {
        let marker = match self.variant {
            GridVariant::A => 'a',
            GridVariant::B => 'G',
        };
        for (r, row) in LAYOUT.iter().enumerate() {
            for (c, ch) in row.chars().enumerate() {
                self.items[r][c] = ch == marker;
            }
        }
    }

    pub fn variant(&self) -> GridVariant {
        self.variant
    }

    fn items_left(&self) -> usize {
        self.items.iter().flatten().filter(|x| **x).count()
    }

    fn observation(&self) -> Vec<f64> {
        let (ar, ac) = self.agent;
        let mut obs = Vec::with_capacity(GRID_OBS_DIM);
        for grid in [&self.walls, &self.items] {
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    // The border is walled, so the agent never sees outside the grid.
                    let r = (ar as i64 + dr) as usize;
                    let c = (ac as i64 + dc) as usize;
                    obs.push(if grid[r][c] { 1.0 } else { 0.0 });
                }
            }
        }
        obs.push(ar as f64 / (HEIGHT - 1) as f64);
        obs.push(ac as f64 / (WIDTH - 1) as f64);
        obs
    }
}

impl Env for GridRooms {
    fn id(&self) -> &str {
        match self.variant {
            GridVariant::A => "grid_rooms_a",
            GridVariant::B => "grid_rooms_b",
        }
    }

    fn spec(&self) -> EnvSpec {
        EnvSpec {
            observation: ObservationSpec {
                dim: GRID_OBS_DIM,
                ranges: vec![(0.0, 1.0); GRID_OBS_DIM],
            },
            action: ActionSpec::Discrete { n: GRID_ACTIONS },
            max_episode_length: self.config.max_steps,
        }
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.agent = self.spawn;
        self.place_items();
        self.clock.restart();
        self.observation()
    }

    fn step(&mut self, action: &Action) -> Result<StepResult> {
        self.clock.begin_step(self.id())?;
        let a = match action {
            Action::Discrete(a) if *a < GRID_ACTIONS => *a,
            Action::Discrete(a) => {
                return Err(Error::Usage(format!(
                    "{}: action {a} outside 0..{GRID_ACTIONS}",
                    self.id()
                )))
            }
            Action::Continuous(_) => return Err(Error::Usage(format!("{}: expected a discrete action", self.id()))),
        };
        let (r, c) = self.agent;
        let target = match a {
            1 => (r - 1, c),
            2 => (r + 1, c),
            3 => (r, c - 1),
            4 => (r, c + 1),
            _ => (r, c),
        };
        if !self.walls[target.0][target.1] {
            self.agent = target;
        }
        let (ar, ac) = self.agent;
        let picked = std::mem::replace(&mut self.items[ar][ac], false);
        let (reward, terminal) = match self.variant {
            GridVariant::A => {
                let reward = if picked {
                    self.config.pellet_reward
                } else {
                    self.config.step_reward_a
                };
                (reward, self.items_left() == 0)
            }
            GridVariant::B => {
                if picked {
                    (self.config.exit_reward, true)
                } else {
                    (self.config.step_reward_b, false)
                }
            }
        };
        let (terminal, truncated) = self.clock.finish_step(terminal, self.config.max_steps);
        Ok(StepResult {
            observation: self.observation(),
            reward,
            terminal,
            truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(env: &mut GridRooms, actions: &[usize]) -> Vec<StepResult> {
        actions
            .iter()
            .map(|a| env.step(&Action::Discrete(*a)).unwrap())
            .collect()
    }

    #[test]
    fn fixed_spawn_regardless_of_seed() {
        let mut a = GridRooms::new(GridVariant::A, Default::default()).unwrap();
        let o1 = a.reset(0);
        let o2 = a.reset(999);
        assert_eq!(o1, o2);
        assert_eq!(a.agent, (5, 1));
    }

    #[test]
    fn variants_share_specs() {
        let a = GridRooms::new(GridVariant::A, Default::default()).unwrap();
        let b = GridRooms::new(GridVariant::B, Default::default()).unwrap();
        assert_eq!(a.spec(), b.spec());
    }

    #[test]
    fn walking_into_wall_keeps_position() {
        for (variant, step_reward) in [(GridVariant::A, 0.0), (GridVariant::B, -0.01)] {
            let mut env = GridRooms::new(variant, Default::default()).unwrap();
            let before = env.reset(0);
            // Spawn is in the bottom-left corner: down and left are walls.
            for r in run(&mut env, &[2, 3]) {
                assert_eq!(r.observation, before);
                assert_eq!(r.reward, step_reward);
            }
        }
    }

    #[test]
    fn pellets_pay_once_and_clear_ends_episode() {
        let mut env = GridRooms::new(GridVariant::A, Default::default()).unwrap();
        env.reset(0);
        // (5,1) -> up to (3,1) -> right to (3,3): pellet.
        let rs = run(&mut env, &[1, 1, 4, 4]);
        assert_eq!(rs.iter().map(|r| r.reward).sum::<f64>(), 1.0);
        let rs = run(&mut env, &[3, 4]);
        assert_eq!(rs[1].reward, 0.0);
        assert_eq!(env.items_left(), 4);
    }

    #[test]
    fn exit_terminates_variant_b() {
        let mut env = GridRooms::new(GridVariant::B, Default::default()).unwrap();
        env.reset(0);
        // up to row 2, through the doorway to column 7, down to the exit at (5,7).
        let mut path = vec![1, 1, 1];
        path.extend([4; 6]);
        path.extend([2; 3]);
        let rs = run(&mut env, &path);
        let last = rs.last().unwrap();
        assert!(last.terminal && !last.truncated);
        assert_eq!(last.reward, 1.0);
        assert!(rs[..rs.len() - 1].iter().all(|r| r.reward == -0.01 && !r.done()));
    }

    #[test]
    fn out_of_range_action_rejected() {
        let mut env = GridRooms::new(GridVariant::A, Default::default()).unwrap();
        env.reset(0);
        assert!(matches!(env.step(&Action::Discrete(5)), Err(Error::Usage(_))));
    }

    #[test]
    fn truncation_at_limit() {
        let mut env = GridRooms::new(
            GridVariant::B,
            GridRoomsConfig {
                max_steps: 3,
                ..Default::default()
            },
        )
        .unwrap();
        env.reset(0);
        let rs = run(&mut env, &[0, 0, 0]);
        assert_eq!(
            rs.iter().map(|r| r.truncated).collect::<Vec<_>>(),
            vec![false, false, true]
        );
    }
}
