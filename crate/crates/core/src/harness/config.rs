//! Experiment configuration (TOML) with per-environment defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::envs::gridworld::{GridWorldLayout, START_DISTANCE};
use crate::envs::predator_prey::{PredatorPreyConfig, FOOD_FRACTION, PREDATOR_STALL};
use crate::error::{Error, Result};
use crate::learner::{LearnerConfig, PerformanceKind};
use crate::mapping::{MappingSpec, ParameterSpec};
use crate::noise::NoiseConfig;
use crate::progression::{FrictionFormulation, GRAVITY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvironmentKind {
    Gridworld,
    PredatorPrey,
}

impl EnvironmentKind {
    pub fn id(self) -> &'static str {
        match self {
            EnvironmentKind::Gridworld => "gridworld",
            EnvironmentKind::PredatorPrey => "predator_prey",
        }
    }

    /// Name of the evaluation metric written to `evals.csv`.
    pub fn metric_name(self) -> &'static str {
        match self {
            EnvironmentKind::Gridworld => "return_from_start",
            EnvironmentKind::PredatorPrey => "survival_time",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetUnit {
    Episodes,
    Steps,
}

/// Training budget shared by all workers of one seed. `eval_every` is in
/// the same unit as `amount`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub unit: BudgetUnit,
    pub amount: u64,
    pub eval_every: u64,
    pub eval_episodes: u32,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            unit: BudgetUnit::Episodes,
            amount: 2000,
            eval_every: 100,
            eval_episodes: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Geometric,
    Linear,
}

fn default_end_fraction() -> f64 {
    0.8
}
fn default_s_min() -> f64 {
    0.1
}
fn default_s_max() -> f64 {
    2.0
}
fn default_spacing() -> Spacing {
    Spacing::Geometric
}
fn default_formulation() -> FrictionFormulation {
    FrictionFormulation::Uniform
}
fn default_interval_min() -> usize {
    10
}
fn default_gravity() -> f64 {
    GRAVITY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProgressionConfig {
    /// No curriculum: every episode uses the final task.
    None,
    Linear {
        #[serde(default = "default_end_fraction")]
        end_fraction: f64,
    },
    Exponential {
        #[serde(default = "default_end_fraction")]
        end_fraction: f64,
        #[serde(default = "default_s_min")]
        s_min: f64,
        #[serde(default = "default_s_max")]
        s_max: f64,
        #[serde(default = "default_spacing")]
        spacing: Spacing,
    },
    Friction {
        #[serde(default = "default_formulation")]
        formulation: FrictionFormulation,
        #[serde(default = "default_interval_min")]
        interval_min: usize,
        /// Defaults to 10x `interval_min` above four workers, 3x otherwise.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        interval_max: Option<usize>,
        /// Performance at which the progression should end.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_performance: Option<f64>,
        /// Performance of an agent that does nothing; seeds the window.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        baseline_performance: Option<f64>,
        #[serde(default = "default_gravity")]
        gravity: f64,
    },
}

impl Default for ProgressionConfig {
    fn default() -> Self {
        ProgressionConfig::Friction {
            formulation: default_formulation(),
            interval_min: default_interval_min(),
            interval_max: None,
            target_performance: None,
            baseline_performance: None,
            gravity: GRAVITY,
        }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_workers() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub environment: EnvironmentKind,
    /// Grid World layout file; the bundled maze when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layout: Option<PathBuf>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Run workers on real threads instead of the deterministic round-robin.
    #[serde(default)]
    pub threads: bool,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub budget: Budget,
    #[serde(default)]
    pub progression: ProgressionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub performance: Option<PerformanceKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<MappingSpec>,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub learner: LearnerConfig,
    #[serde(default)]
    pub predator_prey: PredatorPreyConfig,
}

impl ExperimentConfig {
    /// Minimal config for `environment` with every other field defaulted.
    pub fn new(environment: EnvironmentKind) -> Self {
        Self {
            environment,
            layout: None,
            seeds: default_seeds(),
            workers: default_workers(),
            threads: false,
            output_dir: default_output_dir(),
            budget: Budget::default(),
            progression: ProgressionConfig::default(),
            performance: None,
            mapping: None,
            noise: NoiseConfig::default(),
            learner: LearnerConfig::default(),
            predator_prey: PredatorPreyConfig::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Loads a config file. A relative `layout` path is taken relative to
    /// the config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let (Some(layout), Some(dir)) = (cfg.layout.as_mut(), path.parent()) {
            if layout.is_relative() {
                *layout = dir.join(&*layout);
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn load_layout(&self) -> Result<GridWorldLayout> {
        match &self.layout {
            Some(p) => GridWorldLayout::load(p),
            None => Ok(GridWorldLayout::default_maze()),
        }
    }

    /// Collects every problem instead of stopping at the first.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.workers == 0 {
            problems.push("workers must be at least 1".to_string());
        }
        if self.seeds.is_empty() {
            problems.push("seeds must not be empty".to_string());
        }
        if self.budget.amount == 0 {
            problems.push("budget.amount must be at least 1".to_string());
        }
        if self.budget.eval_every == 0 {
            problems.push("budget.eval_every must be at least 1".to_string());
        }
        if self.budget.eval_episodes == 0 {
            problems.push("budget.eval_episodes must be at least 1".to_string());
        }
        match &self.progression {
            ProgressionConfig::None => {}
            ProgressionConfig::Linear { end_fraction } => {
                check_end_fraction(*end_fraction, &mut problems);
            }
            ProgressionConfig::Exponential {
                end_fraction,
                s_min,
                s_max,
                spacing,
            } => {
                check_end_fraction(*end_fraction, &mut problems);
                if *s_min == 0.0 || *s_max == 0.0 || !s_min.is_finite() || !s_max.is_finite() {
                    problems.push("progression.s_min and s_max must be finite and nonzero".into());
                } else if s_min > s_max {
                    problems.push(format!(
                        "progression.s_min = {s_min} exceeds s_max = {s_max}"
                    ));
                } else if *spacing == Spacing::Geometric && s_min.signum() != s_max.signum() {
                    problems
                        .push("geometric spacing needs s_min and s_max of the same sign".into());
                } else if *spacing == Spacing::Linear
                    && s_min.signum() != s_max.signum()
                    && self.workers > 1
                {
                    problems.push(
                        "linear spacing across zero would assign s = 0 to some worker".into(),
                    );
                }
            }
            ProgressionConfig::Friction {
                interval_min,
                interval_max,
                target_performance,
                baseline_performance,
                gravity,
                ..
            } => {
                if *interval_min == 0 {
                    problems.push("progression.interval_min must be at least 1".into());
                }
                if let Some(max) = interval_max {
                    if max < interval_min {
                        problems.push(format!(
                            "progression.interval_max = {max} is below interval_min = {interval_min}"
                        ));
                    }
                }
                if !(*gravity > 0.0 && gravity.is_finite()) {
                    problems.push(format!("progression.gravity = {gravity} must be positive"));
                }
                if let (Some(t), Some(b)) = (target_performance, baseline_performance) {
                    if t <= b {
                        problems.push(format!(
                            "progression.target_performance = {t} must exceed baseline_performance = {b}"
                        ));
                    }
                }
            }
        }
        if let Some(mapping) = &self.mapping {
            if let Err(e) = mapping.validate() {
                problems.push(e.to_string());
            }
            let required: &[&str] = match self.environment {
                EnvironmentKind::Gridworld => &[START_DISTANCE],
                EnvironmentKind::PredatorPrey => &[FOOD_FRACTION, PREDATOR_STALL],
            };
            for name in required {
                if mapping.parameter(name).is_none() {
                    problems.push(format!("mapping lacks required parameter `{name}`"));
                }
            }
        }
        problems.extend(self.noise.problems());
        problems.extend(self.learner.problems());
        if self.environment == EnvironmentKind::Gridworld {
            if let Err(e) = self.load_layout() {
                problems.push(e.to_string());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Fills every environment-dependent default so the config can be echoed
    /// verbatim.
    pub fn resolved(&self) -> Result<Self> {
        self.validate()?;
        let mut cfg = self.clone();
        let layout = match cfg.environment {
            EnvironmentKind::Gridworld => Some(cfg.load_layout()?),
            EnvironmentKind::PredatorPrey => None,
        };
        if cfg.performance.is_none() {
            cfg.performance = Some(match cfg.environment {
                EnvironmentKind::Gridworld => PerformanceKind::ClippedReturn,
                EnvironmentKind::PredatorPrey => PerformanceKind::EpisodeDuration,
            });
        }
        if cfg.mapping.is_none() {
            cfg.mapping = Some(default_mapping(cfg.environment, layout.as_ref())?);
        }
        let workers = cfg.workers;
        if let ProgressionConfig::Friction {
            interval_min,
            interval_max,
            target_performance,
            baseline_performance,
            ..
        } = &mut cfg.progression
        {
            if interval_max.is_none() {
                let factor = if workers > 4 { 10 } else { 3 };
                *interval_max = Some(if workers == 1 {
                    *interval_min
                } else {
                    *interval_min * factor
                });
            }
            if baseline_performance.is_none() {
                *baseline_performance = Some(match cfg.environment {
                    EnvironmentKind::Gridworld => 0.0,
                    EnvironmentKind::PredatorPrey => PREDATOR_PREY_BASELINE_DURATION,
                });
            }
            if target_performance.is_none() {
                *target_performance = Some(match &layout {
                    Some(l) => l.best_successful_return(l.start()).ok_or_else(|| {
                        Error::Layout(
                            "no successful episode from the start within 50 actions".into(),
                        )
                    })?,
                    None => PREDATOR_PREY_TARGET_DURATION,
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Rough survival time of an agent that never moves: the predator closes the
/// gap at one cell per step and a single catch is lethal.
pub const PREDATOR_PREY_BASELINE_DURATION: f64 = 8.0;
/// Between the no-food survival bound (100 steps) and the episode cap.
pub const PREDATOR_PREY_TARGET_DURATION: f64 = 300.0;

fn check_end_fraction(f: f64, problems: &mut Vec<String>) {
    if !(f > 0.0 && f <= 1.0) {
        problems.push(format!("progression.end_fraction = {f} must be in (0, 1]"));
    }
}

/// The mapping used when a config does not provide one.
pub fn default_mapping(
    env: EnvironmentKind,
    layout: Option<&GridWorldLayout>,
) -> Result<MappingSpec> {
    match env {
        EnvironmentKind::Gridworld => {
            let layout = layout.ok_or_else(|| Error::Layout("grid world needs a layout".into()))?;
            let max = layout
                .distance(layout.start())
                .ok_or_else(|| Error::Layout("start cannot reach the treasure".into()))?;
            let easy = 1.0;
            let hard = (max as f64).max(easy + 1.0);
            MappingSpec::new(
                env.id(),
                vec![ParameterSpec::continuous(START_DISTANCE, easy, hard)?],
            )
        }
        EnvironmentKind::PredatorPrey => MappingSpec::new(
            env.id(),
            vec![
                ParameterSpec::continuous(FOOD_FRACTION, 0.25, 0.05)?,
                ParameterSpec::continuous(PREDATOR_STALL, 20.0, 0.0)?,
            ],
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_toml_gets_defaults() {
        let cfg = ExperimentConfig::from_toml_str("environment = \"gridworld\"\n").unwrap();
        assert_eq!(cfg, ExperimentConfig::new(EnvironmentKind::Gridworld));
        let r = cfg.resolved().unwrap();
        assert_eq!(r.performance, Some(PerformanceKind::ClippedReturn));
        let ProgressionConfig::Friction {
            target_performance,
            baseline_performance,
            interval_max,
            ..
        } = r.progression
        else {
            panic!("default progression is friction")
        };
        assert_eq!(target_performance, Some(178.0));
        assert_eq!(baseline_performance, Some(0.0));
        assert_eq!(interval_max, Some(10));
        let m = r.mapping.unwrap();
        assert_eq!(m.parameters[0].easy, 1.0);
        assert_eq!(m.parameters[0].hard, 21.0);
    }

    #[test]
    fn resolved_config_round_trips_through_toml() {
        let mut cfg = ExperimentConfig::new(EnvironmentKind::PredatorPrey);
        cfg.workers = 8;
        cfg.noise = NoiseConfig {
            kind: crate::noise::NoiseKind::Global,
            knots: None,
            sigma: Some(0.2),
        };
        let r = cfg.resolved().unwrap();
        let back = ExperimentConfig::from_toml_str(&r.to_toml_string()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn validation_lists_every_problem() {
        let text = r#"
            environment = "predator_prey"
            workers = 0
            seeds = []
            [budget]
            eval_every = 0
            [progression]
            kind = "exponential"
            s_min = -1.0
            s_max = 2.0
            [learner]
            alpha = 2.0
            [mapping]
            environment_id = "predator_prey"
            parameters = [{ name = "food_fraction", kind = "continuous", easy = 0.2, hard = 0.2 }]
        "#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let Err(Error::Config(problems)) = cfg.validate() else {
            panic!("expected config errors")
        };
        assert_eq!(problems.len(), 7, "{problems:#?}");
    }

    #[test]
    fn unknown_fields_in_progression_kind_fail() {
        assert!(ExperimentConfig::from_toml_str(
            "environment = \"gridworld\"\n[progression]\nkind = \"quadratic\"\n"
        )
        .is_err());
    }
}
