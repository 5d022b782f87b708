//! Desk-scale episodic environments driven by [`TaskParameters`].

pub mod gridworld;
pub mod predator_prey;

use std::fmt;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::mapping::TaskParameters;

pub use gridworld::{Cell, CellKind, GridWorld, GridWorldLayout, GridWorldState};
pub use predator_prey::{Pos, PredatorPrey, PredatorPreyConfig, PredatorPreyState};

/// Cardinal moves shared by both environments. The declaration order is the
/// tie-break order used by greedy action selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    North,
    East,
    South,
    West,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::North, Action::East, Action::South, Action::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Action {
        Self::ALL[i]
    }

    /// Row/column delta, with rows growing southwards.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Action::North => (-1, 0),
            Action::East => (0, 1),
            Action::South => (1, 0),
            Action::West => (0, -1),
        }
    }
}

/// Compact state identifier used by the tabular learner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateKey(pub u64);

impl fmt::Display for StateKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoneReason {
    Treasure,
    Pit,
    StepLimit,
    HealthDepleted,
    TimeLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub next_state: S,
    pub reward: f64,
    pub done: bool,
    /// `Some` exactly when `done`.
    pub done_reason: Option<DoneReason>,
}

/// Environment-agnostic step result consumed by the harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub key: StateKey,
    pub reward: f64,
    pub done: bool,
    pub reached_goal: bool,
}

/// What the harness needs from an environment.
pub trait CurriculumEnv: Send {
    /// Starts an episode of the task described by `task`.
    fn reset_task(&mut self, task: &TaskParameters, rng: &mut dyn RngCore) -> Result<StateKey>;

    /// Starts an episode of the final task as used for evaluation.
    fn reset_final(&mut self, rng: &mut dyn RngCore) -> Result<StateKey>;

    fn step(&mut self, action: Action) -> Result<StepOutcome>;
}
