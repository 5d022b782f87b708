//! Curriculum learning with friction-based task progressions.
//!
//! A progression turns training feedback into a task complexity in `[0, 1]`,
//! a mapping turns complexity into environment parameters, and the harness
//! drives workers that share one tabular Q-learner.

pub mod envs;
pub mod error;
pub mod harness;
pub mod learner;
pub mod mapping;
pub mod noise;
pub mod progression;

pub use envs::{
    Action, CurriculumEnv, GridWorld, GridWorldLayout, PredatorPrey, PredatorPreyConfig, StateKey,
    StepOutcome,
};
pub use error::{Error, Result};
pub use harness::{run_experiment, EnvironmentKind, ExperimentConfig, ExperimentResult};
pub use learner::{PerformanceKind, QTable};
pub use mapping::{map_complexity, MappingSpec, ParameterSpec, TaskParameters};
pub use noise::{apply_noise, NoiseConfig, NoiseFunction, NoiseKind};
pub use progression::{
    exponential_progress, friction_step, linear_progress, Complexity, FrictionFormulation,
    FrictionParams, FrictionState, Progression,
};
