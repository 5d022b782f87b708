//! Tabular Q-learning with ε-greedy exploration, and the performance
//! functions fed to adaptive progressions.
//!
//! The table is curriculum-agnostic: transitions from any task update the
//! same values, so knowledge carries over as the task changes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::envs::{Action, StateKey};
use crate::error::{Error, Result};

const DUMP_HEADER: &str = "qtable v1";

/// Linear ε decay from `start` to `end` over the first `decay_fraction` of
/// training, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay_fraction: 0.5,
        }
    }
}

impl EpsilonSchedule {
    /// `progress` is the consumed fraction of the training budget.
    pub fn at(&self, progress: f64) -> f64 {
        let frac = if self.decay_fraction > 0.0 {
            (progress / self.decay_fraction).clamp(0.0, 1.0)
        } else {
            1.0
        };
        if frac >= 1.0 {
            return self.end;
        }
        (self.start + (self.end - self.start) * frac).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma: 0.99,
            epsilon: EpsilonSchedule::default(),
        }
    }
}

impl LearnerConfig {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.alpha) {
            out.push(format!("learner.alpha = {} is outside [0, 1]", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            out.push(format!("learner.gamma = {} is outside [0, 1]", self.gamma));
        }
        let e = &self.epsilon;
        for (name, v) in [("start", e.start), ("end", e.end)] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("learner.epsilon.{name} = {v} is outside [0, 1]"));
            }
        }
        if !(e.decay_fraction >= 0.0 && e.decay_fraction.is_finite()) {
            out.push(format!(
                "learner.epsilon.decay_fraction = {} must be >= 0",
                e.decay_fraction
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    values: HashMap<StateKey, [f64; 4]>,
    alpha: f64,
    gamma: f64,
    epsilon: f64,
}

impl QTable {
    pub fn new(alpha: f64, gamma: f64, epsilon: f64) -> Self {
        Self {
            values: HashMap::new(),
            alpha,
            gamma,
            epsilon: epsilon.clamp(0.0, 1.0),
        }
    }

    pub fn from_config(cfg: &LearnerConfig) -> Self {
        Self::new(cfg.alpha, cfg.gamma, cfg.epsilon.start)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, epsilon: f64) {
        self.epsilon = epsilon.clamp(0.0, 1.0);
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Action values for `key`; unseen states read as zeros.
    pub fn values(&self, key: StateKey) -> [f64; 4] {
        self.values.get(&key).copied().unwrap_or([0.0; 4])
    }

    pub fn value(&self, key: StateKey, action: Action) -> f64 {
        self.values(key)[action.index()]
    }

    /// Highest-valued action; ties go to the earliest in [`Action::ALL`].
    pub fn greedy(&self, key: StateKey) -> Action {
        let v = self.values(key);
        let mut best = 0;
        for i in 1..4 {
            if v[i] > v[best] {
                best = i;
            }
        }
        Action::from_index(best)
    }

    pub fn select_action<R: Rng + ?Sized>(&self, key: StateKey, rng: &mut R) -> Action {
        if self.epsilon > 0.0 && rng.random::<f64>() < self.epsilon {
            Action::from_index(rng.random_range(0..4))
        } else {
            self.greedy(key)
        }
    }

    /// One-step Q-learning backup.
    pub fn update(&mut self, s: StateKey, a: Action, r: f64, next: StateKey, done: bool) {
        let bootstrap = if done {
            0.0
        } else {
            self.values(next)
                .into_iter()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let target = r + self.gamma * bootstrap;
        let alpha = self.alpha;
        let q = &mut self.values.entry(s).or_insert([0.0; 4])[a.index()];
        *q += alpha * (target - *q);
    }

    /// Text dump: a `qtable v1` header, one `alpha gamma epsilon` line, then
    /// `key q_north q_east q_south q_west` per state, sorted by key.
    /// Floats use Rust's shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{DUMP_HEADER}");
        let _ = writeln!(out, "{} {} {}", self.alpha, self.gamma, self.epsilon);
        let mut keys: Vec<_> = self.values.keys().copied().collect();
        keys.sort();
        for k in keys {
            let v = self.values[&k];
            let _ = writeln!(out, "{k} {} {} {} {}", v[0], v[1], v[2], v[3]);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, reason: &str| Error::QTableFormat {
            line,
            reason: reason.to_string(),
        };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, DUMP_HEADER)) => {}
            _ => return Err(bad(1, "missing `qtable v1` header")),
        }
        let (n, params) = lines
            .next()
            .ok_or_else(|| bad(2, "missing parameter line"))?;
        let params: Vec<f64> = params
            .split_whitespace()
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| bad(n, "unparsable parameters"))?;
        let [alpha, gamma, epsilon] = params[..] else {
            return Err(bad(n, "expected `alpha gamma epsilon`"));
        };
        let mut table = QTable::new(alpha, gamma, epsilon);
        for (n, line) in lines.filter(|(_, l)| !l.is_empty()) {
            let mut parts = line.split_whitespace();
            let key: u64 = parts
                .next()
                .and_then(|k| k.parse().ok())
                .ok_or_else(|| bad(n, "bad state key"))?;
            let vals: Vec<f64> = parts
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|_| bad(n, "bad action value"))?;
            let vals: [f64; 4] = vals
                .try_into()
                .map_err(|_| bad(n, "expected four action values"))?;
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(bad(n, "non-finite action value"));
            }
            table.values.insert(StateKey(key), vals);
        }
        Ok(table)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerformanceKind {
    /// Episode return, negative values read as zero.
    ClippedReturn,
    EpisodeDuration,
    RawReturn,
    SuccessIndicator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceSample {
    pub value: f64,
    pub episode_index: u64,
    pub kind: PerformanceKind,
}

pub fn performance(
    kind: PerformanceKind,
    episode_index: u64,
    episode_return: f64,
    episode_length: u32,
    reached_goal: bool,
) -> PerformanceSample {
    let value = match kind {
        PerformanceKind::ClippedReturn => episode_return.max(0.0),
        PerformanceKind::EpisodeDuration => episode_length as f64,
        PerformanceKind::RawReturn => episode_return,
        PerformanceKind::SuccessIndicator => {
            if reached_goal {
                1.0
            } else {
                0.0
            }
        }
    };
    PerformanceSample {
        value,
        episode_index,
        kind,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const S0: StateKey = StateKey(0);
    const S1: StateKey = StateKey(1);

    #[test]
    fn greedy_picks_argmax_and_breaks_ties_in_order() {
        let mut q = QTable::new(1.0, 0.9, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(q.select_action(S0, &mut rng), Action::North);
        q.update(S0, Action::South, 5.0, S1, true);
        q.update(S0, Action::East, 2.0, S1, true);
        assert_eq!(q.select_action(S0, &mut rng), Action::South);
        q.update(S1, Action::West, -1.0, S0, true);
        assert_eq!(q.greedy(S1), Action::North);
    }

    #[test]
    fn full_exploration_is_uniform() {
        let q = QTable::new(0.1, 0.9, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut counts = [0usize; 4];
        let n = 10_000;
        for _ in 0..n {
            counts[q.select_action(S0, &mut rng).index()] += 1;
        }
        let expected = n as f64 / 4.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99.9th percentile of chi-squared with 3 degrees of freedom
        assert!(chi2 < 16.266, "chi2 = {chi2}, counts = {counts:?}");
    }

    #[test]
    fn terminal_target_is_reward() {
        let mut q = QTable::new(1.0, 0.99, 0.0);
        q.update(S1, Action::North, 100.0, S1, true);
        q.update(S0, Action::East, 3.0, S1, true);
        assert_eq!(q.value(S0, Action::East), 3.0);
        q.update(S0, Action::West, 3.0, S1, false);
        assert_eq!(q.value(S0, Action::West), 3.0 + 0.99 * 100.0);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let mut q = QTable::new(0.0, 0.99, 0.0);
        q.update(S0, Action::East, 3.0, S1, false);
        assert_eq!(q.values(S0), [0.0; 4]);
    }

    #[test]
    fn two_state_chain_converges() {
        // S0 -East-> S1 with reward 1, S1 -East-> terminal with reward 2.
        // Q*(S1, East) = 2, Q*(S0, East) = 1 + γ·2.
        let gamma = 0.9;
        let mut q = QTable::new(0.5, gamma, 0.0);
        for _ in 0..200 {
            q.update(S0, Action::East, 1.0, S1, false);
            q.update(S1, Action::East, 2.0, S1, true);
        }
        assert_abs_diff_eq!(q.value(S1, Action::East), 2.0, epsilon = 1e-9);
        assert_abs_diff_eq!(q.value(S0, Action::East), 1.0 + gamma * 2.0, epsilon = 1e-9);
    }

    #[test]
    fn epsilon_schedule() {
        let e = EpsilonSchedule::default();
        assert_eq!(e.at(0.0), 1.0);
        assert_abs_diff_eq!(e.at(0.25), 0.525, epsilon = 1e-12);
        assert_eq!(e.at(0.5), 0.05);
        assert_eq!(e.at(0.9), 0.05);
    }

    #[test]
    fn performance_functions() {
        use PerformanceKind::*;
        assert_eq!(performance(ClippedReturn, 0, -300.0, 10, false).value, 0.0);
        assert_eq!(performance(ClippedReturn, 0, 180.0, 10, true).value, 180.0);
        assert_eq!(
            performance(EpisodeDuration, 3, 0.0, 412, false).value,
            412.0
        );
        assert_eq!(performance(RawReturn, 0, -300.0, 10, false).value, -300.0);
        let s = performance(SuccessIndicator, 7, 0.0, 10, true);
        assert_eq!(
            (s.value, s.episode_index, s.kind),
            (1.0, 7, SuccessIndicator)
        );
        assert_eq!(performance(SuccessIndicator, 0, 0.0, 10, false).value, 0.0);
    }

    #[test]
    fn dump_rejects_garbage() {
        assert!(QTable::from_text("").is_err());
        assert!(QTable::from_text("qtable v1\n0.1 0.9\n").is_err());
        assert!(QTable::from_text("qtable v1\n0.1 0.9 0\n3 1 2 3\n").is_err());
        assert!(QTable::from_text("qtable v1\n0.1 0.9 0\nx 1 2 3 4\n").is_err());
    }

    proptest! {
        #[test]
        fn dump_round_trips(
            entries in prop::collection::vec((any::<u64>(), prop::array::uniform4(-1e6f64..1e6)), 0..40),
            alpha in 0.0f64..1.0,
        ) {
            let mut q = QTable::new(alpha, 0.99, 0.25);
            for (k, v) in &entries {
                q.values.insert(StateKey(*k), *v);
            }
            let back = QTable::from_text(&q.to_text()).unwrap();
            prop_assert_eq!(back, q);
        }
    }
}
