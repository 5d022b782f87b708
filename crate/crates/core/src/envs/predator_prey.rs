//! Predator-Prey: survive on an 11x11 board by eating food while a
//! predator chases the agent.
//!
//! Each step applies, in order: agent move (clamped to the board), health
//! decay, food pickup and respawn, predator move or stall, catch. The
//! reward is the change in health over the step.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Action, CurriculumEnv, DoneReason, StateKey, StepOutcome, Transition};
use crate::error::{Error, Result};
use crate::mapping::TaskParameters;

pub const FOOD_FRACTION: &str = "food_fraction";
pub const PREDATOR_STALL: &str = "predator_stall";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: i32,
    pub col: i32,
}

impl Pos {
    pub const fn new(row: i32, col: i32) -> Self {
        Self { row, col }
    }

    pub fn manhattan(self, other: Pos) -> i32 {
        (self.row - other.row).abs() + (self.col - other.col).abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PredatorPreyConfig {
    pub size: i32,
    pub initial_health: i32,
    pub max_steps: u32,
    pub decay: i32,
    pub catch_damage: i32,
    pub food_restore: i32,
    /// Upper bound applied when eating; `None` disables the cap.
    pub health_cap: Option<i32>,
}

impl Default for PredatorPreyConfig {
    fn default() -> Self {
        Self {
            size: 11,
            initial_health: 100,
            max_steps: 1000,
            decay: 1,
            catch_damage: 100,
            food_restore: 10,
            health_cap: Some(100),
        }
    }
}

impl PredatorPreyConfig {
    pub fn cells(&self) -> usize {
        (self.size * self.size) as usize
    }

    fn pos(&self, idx: usize) -> Pos {
        Pos::new(idx as i32 / self.size, idx as i32 % self.size)
    }

    /// Number of food sources for a given board fraction.
    pub fn food_count(&self, fraction: f64) -> usize {
        let n = (fraction.clamp(0.0, 1.0) * self.cells() as f64).round() as usize;
        n.clamp(1, self.cells() - 2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredatorPreyState {
    pub agent_pos: Pos,
    pub predator_pos: Pos,
    pub food: BTreeSet<Pos>,
    pub health: i32,
    pub predator_stall_remaining: u32,
    pub steps: u32,
}

#[derive(Debug, Clone)]
pub struct PredatorPrey {
    config: PredatorPreyConfig,
    state: PredatorPreyState,
    stall_duration: u32,
    final_task: TaskParameters,
    finished: bool,
    rng: ChaCha8Rng,
}

impl PredatorPrey {
    /// `final_task` is the configuration used by [`CurriculumEnv::reset_final`].
    pub fn new(config: PredatorPreyConfig, final_task: TaskParameters) -> Self {
        Self {
            state: PredatorPreyState {
                agent_pos: Pos::new(0, 0),
                predator_pos: Pos::new(0, 0),
                food: BTreeSet::new(),
                health: config.initial_health,
                predator_stall_remaining: 0,
                steps: 0,
            },
            config,
            stall_duration: 0,
            final_task,
            finished: true,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    pub fn config(&self) -> &PredatorPreyConfig {
        &self.config
    }

    pub fn state(&self) -> &PredatorPreyState {
        &self.state
    }

    pub fn stall_duration(&self) -> u32 {
        self.stall_duration
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    pub fn reset<R: RngCore + ?Sized>(
        &mut self,
        task: &TaskParameters,
        rng: &mut R,
    ) -> Result<&PredatorPreyState> {
        let fraction = task.get(FOOD_FRACTION)?;
        let stall = task.get(PREDATOR_STALL)?;
        if !(stall.is_finite() && stall >= 0.0) {
            return Err(Error::Mapping(format!(
                "predator stall {stall} must be >= 0"
            )));
        }
        self.stall_duration = stall.round() as u32;
        self.rng = ChaCha8Rng::seed_from_u64(rng.next_u64());

        let n_food = self.config.food_count(fraction);
        let picks = sample(&mut self.rng, self.config.cells(), n_food + 2);
        let mut picks = picks.into_iter().map(|i| self.config.pos(i));
        let agent_pos = picks.next().expect("sampled n_food + 2 cells");
        let predator_pos = picks.next().expect("sampled n_food + 2 cells");
        self.state = PredatorPreyState {
            agent_pos,
            predator_pos,
            food: picks.collect(),
            health: self.config.initial_health,
            predator_stall_remaining: 0,
            steps: 0,
        };
        self.finished = false;
        Ok(&self.state)
    }

    fn clamp(&self, p: Pos) -> Pos {
        let max = self.config.size - 1;
        Pos::new(p.row.clamp(0, max), p.col.clamp(0, max))
    }

    fn respawn_food(&mut self) {
        let occupied = |p: &Pos| {
            self.state.food.contains(p)
                || *p == self.state.agent_pos
                || *p == self.state.predator_pos
        };
        let free: Vec<Pos> = (0..self.config.cells())
            .map(|i| self.config.pos(i))
            .filter(|p| !occupied(p))
            .collect();
        if !free.is_empty() {
            let p = free[self.rng.random_range(0..free.len())];
            self.state.food.insert(p);
        }
    }

    /// One greedy step that reduces the Manhattan distance, rows first.
    fn chase(predator: Pos, target: Pos) -> Pos {
        if predator.row != target.row {
            Pos::new(
                predator.row + (target.row - predator.row).signum(),
                predator.col,
            )
        } else {
            Pos::new(
                predator.row,
                predator.col + (target.col - predator.col).signum(),
            )
        }
    }

    pub fn step(&mut self, action: Action) -> Result<Transition<PredatorPreyState>> {
        if self.finished {
            return Err(Error::EpisodeFinished);
        }
        let before = self.state.health;
        let (dr, dc) = action.delta();
        let s = &self.state;
        let moved = self.clamp(Pos::new(s.agent_pos.row + dr, s.agent_pos.col + dc));
        self.state.agent_pos = moved;
        self.state.health -= self.config.decay;

        if self.state.food.remove(&moved) {
            let restored = self.state.health + self.config.food_restore;
            self.state.health = match self.config.health_cap {
                Some(cap) => restored.min(cap.max(self.state.health)),
                None => restored,
            };
            self.respawn_food();
        }

        if self.state.predator_stall_remaining > 0 {
            self.state.predator_stall_remaining -= 1;
        } else {
            if self.state.predator_pos != moved {
                self.state.predator_pos = Self::chase(self.state.predator_pos, moved);
            }
            if self.state.predator_pos == moved {
                self.state.health -= self.config.catch_damage;
                self.state.predator_stall_remaining = self.stall_duration;
            }
        }
        self.state.steps += 1;

        let done_reason = if self.state.health <= 0 {
            Some(DoneReason::HealthDepleted)
        } else if self.state.steps >= self.config.max_steps {
            Some(DoneReason::TimeLimit)
        } else {
            None
        };
        self.finished = done_reason.is_some();
        Ok(Transition {
            next_state: self.state.clone(),
            reward: (self.state.health - before) as f64,
            done: self.finished,
            done_reason,
        })
    }

    /// Board as three `size x size` channels (agent, predator, food),
    /// channel-major.
    pub fn observation(&self) -> Vec<f32> {
        let n = self.config.cells();
        let mut obs = vec![0.0; 3 * n];
        let idx = |p: Pos| (p.row * self.config.size + p.col) as usize;
        obs[idx(self.state.agent_pos)] = 1.0;
        obs[n + idx(self.state.predator_pos)] = 1.0;
        for &f in &self.state.food {
            obs[2 * n + idx(f)] = 1.0;
        }
        obs
    }

    /// Tabular key: predator offset and nearest-food offset (each clamped to
    /// ±2 per axis) plus the health decile.
    pub fn state_key(&self) -> StateKey {
        let s = &self.state;
        let offset = |p: Pos| {
            let dr = (p.row - s.agent_pos.row).clamp(-2, 2) + 2;
            let dc = (p.col - s.agent_pos.col).clamp(-2, 2) + 2;
            (dr * 5 + dc) as u64
        };
        let predator = offset(s.predator_pos);
        let food = s
            .food
            .iter()
            .min_by_key(|f| f.manhattan(s.agent_pos))
            .map_or(25, |&f| offset(f));
        let decile = (s.health.clamp(0, 100) / 10) as u64;
        StateKey((predator * 26 + food) * 11 + decile)
    }
}

impl CurriculumEnv for PredatorPrey {
    fn reset_task(&mut self, task: &TaskParameters, rng: &mut dyn RngCore) -> Result<StateKey> {
        self.reset(task, rng)?;
        Ok(self.state_key())
    }

    fn reset_final(&mut self, rng: &mut dyn RngCore) -> Result<StateKey> {
        let task = self.final_task.clone();
        self.reset(&task, rng)?;
        Ok(self.state_key())
    }

    fn step(&mut self, action: Action) -> Result<StepOutcome> {
        let t = PredatorPrey::step(self, action)?;
        Ok(StepOutcome {
            key: self.state_key(),
            reward: t.reward,
            done: t.done,
            reached_goal: t.done_reason == Some(DoneReason::TimeLimit),
        })
    }
}
