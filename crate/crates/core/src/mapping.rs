//! Mapping functions: turn a complexity value into a concrete task.
//!
//! Every parameter is mapped independently. Continuous parameters are
//! interpolated affinely between their `easy` value (complexity 0) and their
//! `hard` value (complexity 1); binary parameters flip from `easy` to `hard`
//! once the complexity strictly exceeds a switch threshold.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::gridworld::{Cell, GridWorldLayout};
use crate::error::{Error, Result};
use crate::progression::Complexity;

pub const DEFAULT_SWITCH_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParameterKind {
    Continuous,
    Binary {
        #[serde(default = "default_threshold")]
        switch_threshold: f64,
    },
}

fn default_threshold() -> f64 {
    DEFAULT_SWITCH_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: ParameterKind,
    /// Value used for the easiest task (complexity 0).
    pub easy: f64,
    /// Value used for the final task (complexity 1).
    pub hard: f64,
}

impl ParameterSpec {
    pub fn continuous(name: impl Into<String>, easy: f64, hard: f64) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            kind: ParameterKind::Continuous,
            easy,
            hard,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn binary(
        name: impl Into<String>,
        easy: f64,
        hard: f64,
        switch_threshold: f64,
    ) -> Result<Self> {
        let spec = Self {
            name: name.into(),
            kind: ParameterKind::Binary { switch_threshold },
            easy,
            hard,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.easy.is_finite() && self.hard.is_finite()) {
            return Err(Error::Mapping(format!(
                "parameter `{}` has non-finite bounds",
                self.name
            )));
        }
        match self.kind {
            ParameterKind::Continuous if self.easy == self.hard => Err(Error::Mapping(format!(
                "continuous parameter `{}` needs distinct easy/hard values",
                self.name
            ))),
            ParameterKind::Binary { switch_threshold }
                if !(switch_threshold > 0.0 && switch_threshold < 1.0) =>
            {
                Err(Error::Mapping(format!(
                    "binary parameter `{}` threshold {switch_threshold} not in (0, 1)",
                    self.name
                )))
            }
            _ => Ok(()),
        }
    }
}

/// Affine interpolation from `easy` (c = 0) to `hard` (c = 1).
pub fn interpolate_param(spec: &ParameterSpec, c: Complexity) -> Result<f64> {
    if !matches!(spec.kind, ParameterKind::Continuous) {
        return Err(Error::Mapping(format!(
            "`{}` is binary; use binary_param",
            spec.name
        )));
    }
    let c = c.value();
    let value = if c >= 1.0 {
        spec.hard
    } else if spec.hard > spec.easy {
        spec.easy + (spec.hard - spec.easy) * c
    } else {
        spec.easy - (spec.easy - spec.hard) * c
    };
    Ok(value)
}

/// `easy` while `c <= threshold`, `hard` once `c` exceeds it.
pub fn binary_param(spec: &ParameterSpec, c: Complexity) -> Result<f64> {
    match spec.kind {
        ParameterKind::Binary { switch_threshold } => Ok(if c.value() <= switch_threshold {
            spec.easy
        } else {
            spec.hard
        }),
        ParameterKind::Continuous => Err(Error::Mapping(format!(
            "`{}` is continuous; use interpolate_param",
            spec.name
        ))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingSpec {
    pub environment_id: String,
    pub parameters: Vec<ParameterSpec>,
}

impl MappingSpec {
    pub fn new(environment_id: impl Into<String>, parameters: Vec<ParameterSpec>) -> Result<Self> {
        let spec = Self {
            environment_id: environment_id.into(),
            parameters,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for p in &self.parameters {
            if !seen.insert(p.name.as_str()) {
                return Err(Error::Mapping(format!("duplicate parameter `{}`", p.name)));
            }
            p.validate()?;
        }
        Ok(())
    }

    pub fn parameter(&self, name: &str) -> Option<&ParameterSpec> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

/// A concrete task: one value per mapped parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskParameters {
    pub environment_id: String,
    pub assignments: BTreeMap<String, f64>,
    pub complexity_used: Complexity,
}

impl TaskParameters {
    pub fn get(&self, name: &str) -> Result<f64> {
        self.assignments.get(name).copied().ok_or_else(|| {
            Error::Mapping(format!(
                "task for `{}` has no parameter `{name}`",
                self.environment_id
            ))
        })
    }
}

pub fn map_complexity(mapping: &MappingSpec, c: Complexity) -> TaskParameters {
    let assignments = mapping
        .parameters
        .iter()
        .map(|p| {
            let v = match p.kind {
                ParameterKind::Continuous => interpolate_param(p, c),
                ParameterKind::Binary { .. } => binary_param(p, c),
            }
            .expect("kind checked by match");
            (p.name.clone(), v)
        })
        .collect();
    TaskParameters {
        environment_id: mapping.environment_id.clone(),
        assignments,
        complexity_used: c,
    }
}

/// Picks a start cell whose shortest-path distance to the treasure is
/// `round(d)` (at least 1), restricted to cells with no negative reward.
///
/// Distances at or beyond the designated start's distance return the
/// designated start. When no eligible cell sits at exactly the requested
/// distance, the closest available distance is used, preferring the
/// smaller one on ties. Among cells at the chosen distance one is drawn
/// uniformly.
pub fn gridworld_start_for_distance<R: Rng + ?Sized>(
    layout: &GridWorldLayout,
    d: f64,
    rng: &mut R,
) -> Result<Cell> {
    let start_distance = layout
        .distance(layout.start())
        .ok_or_else(|| Error::Layout("designated start cannot reach the treasure".into()))?;
    let target = if d.is_finite() {
        d.round().max(1.0)
    } else {
        1.0
    };
    if target >= start_distance as f64 {
        return Ok(layout.start());
    }
    let target = target as u32;

    let eligible = layout.eligible_starts();
    let best = eligible
        .iter()
        .map(|&(_, dist)| dist)
        .min_by_key(|&dist| (dist.abs_diff(target), dist))
        .ok_or_else(|| Error::Layout("no eligible start cells".into()))?;
    let candidates: Vec<Cell> = eligible
        .iter()
        .filter(|&&(_, dist)| dist == best)
        .map(|&(cell, _)| cell)
        .collect();
    Ok(candidates[rng.random_range(0..candidates.len())])
}
