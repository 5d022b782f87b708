//! Progression functions: map training time (and, for adaptive schedules,
//! the agent's recent performance) to a complexity value in `[0, 1]`.
//!
//! Two families are provided:
//!
//! * fixed schedules ([`linear_progress`], [`exponential_progress`]) that only
//!   depend on the step counter;
//! * the friction-based schedule ([`FrictionState`]), which models a box
//!   sliding on a plane whose friction coefficient is the agent's rate of
//!   improvement over a window of `interval` samples. Complexity is derived
//!   from the box's speed (`1 - speed`, with three readout variants).

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gravitational constant of the sliding-box model. Only the product
/// `mass * GRAVITY` affects the schedule.
pub const GRAVITY: f64 = 9.81;

/// Speeds at or below this are treated as zero (the progression has ended).
pub const END_SPEED_EPSILON: f64 = 1e-12;

/// A task complexity in `[0, 1]`. `0` is the easiest task, `1` the final task.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Complexity(f64);

impl Complexity {
    pub const EASIEST: Complexity = Complexity(0.0);
    pub const FINAL: Complexity = Complexity(1.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Complexity(value))
        } else {
            Err(Error::invalid(
                "complexity",
                format!("{value} is outside [0, 1]"),
            ))
        }
    }

    /// Clamps into `[0, 1]`; NaN maps to 0.
    pub fn saturating(value: f64) -> Self {
        if value.is_nan() {
            Complexity(0.0)
        } else {
            Complexity(value.clamp(0.0, 1.0))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Complexity {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Complexity::new(value)
    }
}

impl From<Complexity> for f64 {
    fn from(c: Complexity) -> f64 {
        c.0
    }
}

impl fmt::Display for Complexity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    end_step: u64,
}

impl LinearParams {
    pub fn new(end_step: u64) -> Result<Self> {
        if end_step == 0 {
            return Err(Error::invalid("end_step", "must be at least 1"));
        }
        Ok(Self { end_step })
    }

    pub fn end_step(&self) -> u64 {
        self.end_step
    }
}

/// `min(t / t_e, 1)`.
pub fn linear_progress(t: u64, params: &LinearParams) -> Complexity {
    Complexity::saturating(t as f64 / params.end_step as f64)
}

/// Parameters of the exponential schedule. `slope` controls curvature:
/// positive values give a slow start, negative values a fast start, and
/// the curve approaches the linear schedule as `|slope|` grows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialParams {
    end_step: u64,
    slope: f64,
    alpha: f64,
}

impl ExponentialParams {
    pub fn new(end_step: u64, slope: f64) -> Result<Self> {
        if end_step == 0 {
            return Err(Error::invalid("end_step", "must be at least 1"));
        }
        if slope == 0.0 || !slope.is_finite() {
            return Err(Error::invalid(
                "slope",
                format!("must be finite and nonzero, got {slope}"),
            ));
        }
        Ok(Self {
            end_step,
            slope,
            alpha: 1.0 / slope,
        })
    }

    pub fn end_step(&self) -> u64 {
        self.end_step
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// `((e^{t/t_e})^α − 1) / (e^α − 1)` on `[0, t_e]`, `1` afterwards.
///
/// Evaluated through `expm1` so that large slopes (α → 0) keep full
/// precision instead of cancelling to `0/0`.
pub fn exponential_progress(t: u64, params: &ExponentialParams) -> Complexity {
    if t >= params.end_step {
        return Complexity::FINAL;
    }
    let x = t as f64 / params.end_step as f64;
    let value = (params.alpha * x).exp_m1() / params.alpha.exp_m1();
    Complexity::saturating(value)
}

/// Readout used to turn the box speed into a complexity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrictionFormulation {
    /// `1 - U(s_min, s_t)`: hedges against performance drops by sampling
    /// between the current and the lowest speed reached so far.
    Uniform,
    /// `1 - s_min`: never decreases.
    Monotonic,
    /// `1 - s_t`: follows the speed directly.
    Speed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrictionParams {
    mass: f64,
    gravity: f64,
    interval: usize,
    formulation: FrictionFormulation,
}

impl FrictionParams {
    pub fn new(mass: f64, interval: usize, formulation: FrictionFormulation) -> Result<Self> {
        Self::with_gravity(mass, GRAVITY, interval, formulation)
    }

    pub fn with_gravity(
        mass: f64,
        gravity: f64,
        interval: usize,
        formulation: FrictionFormulation,
    ) -> Result<Self> {
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::invalid(
                "mass",
                format!("must be positive, got {mass}"),
            ));
        }
        if !(gravity > 0.0 && gravity.is_finite()) {
            return Err(Error::invalid(
                "gravity",
                format!("must be positive, got {gravity}"),
            ));
        }
        if interval == 0 {
            return Err(Error::invalid("interval", "must be at least 1"));
        }
        Ok(Self {
            mass,
            gravity,
            interval,
            formulation,
        })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn interval(&self) -> usize {
        self.interval
    }

    pub fn formulation(&self) -> FrictionFormulation {
        self.formulation
    }
}

/// Mass for which the friction progression ends once the mean performance
/// over the latest window exceeds the initial-window mean by `target_rise`.
///
/// The speed after `t` samples is `1 + m·g·(mean_initial − mean_latest)`
/// whenever the `[0, 1]` clip does not bind, so the speed reaches zero
/// exactly when the rise equals `1 / (m·g)`.
pub fn solve_mass(target_rise: f64, gravity: f64) -> Result<f64> {
    if !(target_rise > 0.0 && target_rise.is_finite()) {
        return Err(Error::invalid(
            "target_rise",
            format!("must be positive, got {target_rise}"),
        ));
    }
    if !(gravity > 0.0 && gravity.is_finite()) {
        return Err(Error::invalid(
            "gravity",
            format!("must be positive, got {gravity}"),
        ));
    }
    Ok(1.0 / (gravity * target_rise))
}

/// Per-worker state of the friction progression.
///
/// `t` counts performance samples. The window is pre-filled with
/// `interval` copies of the baseline performance so that the schedule can
/// react from the very first sample.
#[derive(Debug, Clone)]
pub struct FrictionState {
    t: u64,
    speed: f64,
    min_speed: f64,
    window: VecDeque<f64>,
    rng: ChaCha8Rng,
}

impl FrictionState {
    pub fn new(params: &FrictionParams, baseline_perf: f64, seed: u64) -> Self {
        let window = std::iter::repeat_n(baseline_perf, params.interval).collect();
        Self {
            t: params.interval as u64,
            speed: 1.0,
            min_speed: 1.0,
            window,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    pub fn min_speed(&self) -> f64 {
        self.min_speed
    }

    /// The stored performance samples, oldest first.
    pub fn window(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        self.window.iter().copied()
    }

    /// True once the speed has reached zero.
    pub fn ended(&self) -> bool {
        self.speed <= END_SPEED_EPSILON
    }

    /// Feeds one performance sample and returns the new complexity.
    pub fn step(&mut self, params: &FrictionParams, perf: f64) -> Complexity {
        debug_assert_eq!(self.window.len(), params.interval);
        let oldest = self
            .window
            .pop_front()
            .expect("friction window is never empty");
        let friction = (perf - oldest) / params.interval as f64;
        self.window.push_back(perf);
        self.t += 1;

        let mut speed = (self.speed - params.mass * params.gravity * friction).clamp(0.0, 1.0);
        if speed <= END_SPEED_EPSILON {
            speed = 0.0;
        }
        self.speed = speed;
        self.min_speed = self.min_speed.min(speed);

        let readout = match params.formulation {
            FrictionFormulation::Speed => speed,
            FrictionFormulation::Monotonic => self.min_speed,
            FrictionFormulation::Uniform => {
                let (lo, hi) = (self.min_speed, speed);
                if lo < hi {
                    self.rng.random_range(lo..=hi)
                } else {
                    lo
                }
            }
        };
        Complexity::saturating(1.0 - readout)
    }
}

/// Free-function form of [`FrictionState::step`].
pub fn friction_step(state: &mut FrictionState, params: &FrictionParams, perf: f64) -> Complexity {
    state.step(params, perf)
}

/// A configured progression for one worker, queried once per episode.
#[derive(Debug, Clone)]
pub enum Progression {
    /// Always the final task.
    Constant(Complexity),
    Linear(LinearParams),
    Exponential(ExponentialParams),
    Friction {
        params: FrictionParams,
        state: Box<FrictionState>,
        current: Complexity,
    },
}

impl Progression {
    pub fn friction(params: FrictionParams, baseline_perf: f64, seed: u64) -> Self {
        Progression::Friction {
            state: Box::new(FrictionState::new(&params, baseline_perf, seed)),
            params,
            current: Complexity::EASIEST,
        }
    }

    /// Complexity for the next episode. `elapsed` is the worker's consumed
    /// training time in the unit the fixed schedules were built with.
    pub fn complexity(&self, elapsed: u64) -> Complexity {
        match self {
            Progression::Constant(c) => *c,
            Progression::Linear(p) => linear_progress(elapsed, p),
            Progression::Exponential(p) => exponential_progress(elapsed, p),
            Progression::Friction { current, .. } => *current,
        }
    }

    /// Reports the performance of a finished episode. Fixed schedules ignore it.
    pub fn observe(&mut self, perf: f64) {
        if let Progression::Friction {
            params,
            state,
            current,
        } = self
        {
            *current = state.step(params, perf);
        }
    }

    pub fn is_adaptive(&self) -> bool {
        matches!(self, Progression::Friction { .. })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn linear_examples() {
        let p = LinearParams::new(100).unwrap();
        assert_eq!(linear_progress(0, &p).value(), 0.0);
        assert_eq!(linear_progress(50, &p).value(), 0.5);
        assert_eq!(linear_progress(150, &p).value(), 1.0);
        assert!(LinearParams::new(0).is_err());
    }

    #[test]
    fn exponential_examples() {
        let p = ExponentialParams::new(100, 1.0).unwrap();
        assert_eq!(exponential_progress(0, &p).value(), 0.0);
        assert_eq!(exponential_progress(100, &p).value(), 1.0);
        assert_eq!(exponential_progress(250, &p).value(), 1.0);
        // (e^0.5 - 1) / (e - 1), 40-digit reference value.
        assert_abs_diff_eq!(
            exponential_progress(50, &p).value(),
            0.377_540_668_798_145_4,
            epsilon = 1e-15
        );
        let p = ExponentialParams::new(100, 1e6).unwrap();
        assert_abs_diff_eq!(
            exponential_progress(50, &p).value(),
            0.499_999_875,
            epsilon = 1e-12
        );
        assert_eq!(p.alpha(), 1.0 / 1e6);
    }

    #[test]
    fn exponential_rejects_zero_slope() {
        assert!(ExponentialParams::new(10, 0.0).is_err());
        assert!(ExponentialParams::new(10, f64::NAN).is_err());
    }

    #[test]
    fn exponential_sign_of_slope() {
        // Reference values: s = 0.1 at t/t_e = 0.3 gives 8.665e-4, s = -2 gives 0.35401.
        let slow = ExponentialParams::new(1000, 0.1).unwrap();
        let fast = ExponentialParams::new(1000, -2.0).unwrap();
        assert_abs_diff_eq!(
            exponential_progress(300, &slow).value(),
            8.665_213_758_016_304e-4,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            exponential_progress(300, &fast).value(),
            0.354_009_853_660_291_8,
            epsilon = 1e-14
        );
        let line = LinearParams::new(1000).unwrap();
        for t in 1..1000 {
            let l = linear_progress(t, &line).value();
            assert!(exponential_progress(t, &slow).value() < l);
            assert!(exponential_progress(t, &fast).value() > l);
        }
    }

    fn params(mass: f64, interval: usize, formulation: FrictionFormulation) -> FrictionParams {
        FrictionParams::new(mass, interval, formulation).unwrap()
    }

    #[test]
    fn friction_construction_rejects_bad_values() {
        assert!(FrictionParams::new(0.0, 5, FrictionFormulation::Speed).is_err());
        assert!(FrictionParams::new(1.0, 0, FrictionFormulation::Speed).is_err());
        assert!(FrictionParams::with_gravity(1.0, -1.0, 3, FrictionFormulation::Speed).is_err());
    }

    #[test]
    fn init_state() {
        let p = params(1.0, 5, FrictionFormulation::Uniform);
        let s = FrictionState::new(&p, 0.0, 7);
        assert_eq!(s.window().collect::<Vec<_>>(), vec![0.0; 5]);
        assert_eq!(s.speed(), 1.0);
        assert_eq!(s.min_speed(), 1.0);
        assert_eq!(s.t(), 5);
    }

    #[test]
    fn constant_performance_keeps_complexity_at_zero() {
        for f in [
            FrictionFormulation::Uniform,
            FrictionFormulation::Monotonic,
            FrictionFormulation::Speed,
        ] {
            let p = params(0.3, 4, f);
            let mut s = FrictionState::new(&p, 2.5, 1);
            for _ in 0..50 {
                assert_eq!(s.step(&p, 2.5).value(), 0.0);
            }
            assert_eq!(s.speed(), 1.0);
        }
    }

    #[test]
    fn linear_trend_matches_closed_form() {
        // p_t = k * t after a zero baseline: mu = k once the window is past
        // the baseline, so the speed falls by m*g*k per sample.
        let (k, interval, mass) = (0.01, 5usize, 0.2);
        let p = params(mass, interval, FrictionFormulation::Speed);
        let mut s = FrictionState::new(&p, 0.0, 0);
        // step-by-step oracle, kept independent of FrictionState
        let mut history = vec![0.0; interval];
        let mut speed = 1.0f64;
        for t in (interval + 1)..=(interval + 30) {
            let perf = k * (t - interval) as f64;
            history.push(perf);
            let mu = (perf - history[history.len() - 1 - interval]) / interval as f64;
            speed = (speed - mass * GRAVITY * mu).clamp(0.0, 1.0);
            let c = s.step(&p, perf).value();
            assert_abs_diff_eq!(c, 1.0 - speed, epsilon = 1e-12);
        }
        // Once the whole window holds the trend (t >= 2i) each step adds m*g*k.
        let mut s = FrictionState::new(&p, 0.0, 0);
        let mut cs = Vec::new();
        for n in 1..=20u64 {
            cs.push(s.step(&p, k * n as f64).value());
        }
        for w in cs[interval..].windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], mass * GRAVITY * k, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_spans_range_after_drop() {
        let p = params(1.0, 2, FrictionFormulation::Uniform);
        let mut s = FrictionState::new(&p, 0.0, 99);
        // climb, then drop
        for perf in [0.02, 0.04, 0.06, 0.08] {
            s.step(&p, perf);
        }
        let min_speed = s.min_speed();
        s.step(&p, 0.0);
        assert!(s.speed() > min_speed);
        let (lo, hi) = (1.0 - s.speed(), 1.0 - min_speed);
        // Freeze the state and sample the readout repeatedly.
        let mut seen_min = f64::INFINITY;
        let mut seen_max = f64::NEG_INFINITY;
        let mut rng = s.rng.clone();
        for _ in 0..10_000 {
            let u: f64 = rand::Rng::random_range(&mut rng, min_speed..=s.speed());
            let c = 1.0 - u;
            seen_min = seen_min.min(c);
            seen_max = seen_max.max(c);
            assert!(c >= lo - 1e-15 && c <= hi + 1e-15);
        }
        assert!((seen_min - lo).abs() < 1e-2);
        assert!((seen_max - hi).abs() < 1e-2);
    }

    #[test]
    fn degenerate_uniform_returns_one_minus_min_speed() {
        let p = params(1.0, 1, FrictionFormulation::Uniform);
        let mut s = FrictionState::new(&p, 0.0, 3);
        let c = s.step(&p, 0.05);
        assert_eq!(s.speed(), s.min_speed());
        assert_abs_diff_eq!(c.value(), 1.0 - s.min_speed(), epsilon = 0.0);
    }

    #[test]
    fn first_step_at_baseline_is_zero() {
        let p = params(2.0, 3, FrictionFormulation::Uniform);
        let mut s = FrictionState::new(&p, -4.0, 0);
        assert_eq!(s.step(&p, -4.0).value(), 0.0);
    }

    #[test]
    fn same_seed_same_draws() {
        let p = params(5.0, 3, FrictionFormulation::Uniform);
        let trace: Vec<f64> = (0..200).map(|t| ((t as f64) * 0.37).sin() * 0.05).collect();
        let run = |seed| {
            let mut s = FrictionState::new(&p, 0.0, seed);
            trace
                .iter()
                .map(|&x| s.step(&p, x).value())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn solve_mass_examples() {
        assert_abs_diff_eq!(solve_mass(0.5, 9.81).unwrap(), 1.0 / (9.81 * 0.5));
        assert_abs_diff_eq!(solve_mass(1.0 / 9.81, 9.81).unwrap(), 1.0, epsilon = 1e-15);
        assert!(solve_mass(0.0, 9.81).is_err());
        assert!(solve_mass(-1.0, 9.81).is_err());
    }

    #[test]
    fn progression_wrapper_holds_value_between_observations() {
        let fp = params(
            solve_mass(1.0, GRAVITY).unwrap(),
            2,
            FrictionFormulation::Speed,
        );
        let mut prog = Progression::friction(fp, 0.0, 0);
        assert_eq!(prog.complexity(0).value(), 0.0);
        prog.observe(0.5);
        let c = prog.complexity(123);
        assert!(c.value() > 0.0);
        assert_eq!(prog.complexity(999), c);
    }

    proptest! {
        #[test]
        fn friction_output_in_unit_interval(
            trace in prop::collection::vec(-100.0f64..100.0, 1..200),
            mass in 0.001f64..10.0,
            interval in 1usize..20,
            seed in any::<u64>(),
        ) {
            for f in [FrictionFormulation::Uniform, FrictionFormulation::Monotonic, FrictionFormulation::Speed] {
                let p = params(mass, interval, f);
                let mut s = FrictionState::new(&p, 0.0, seed);
                let mut prev_min = s.min_speed();
                for &x in &trace {
                    let c = s.step(&p, x).value();
                    prop_assert!((0.0..=1.0).contains(&c));
                    prop_assert!(s.min_speed() <= prev_min);
                    prop_assert!(s.min_speed() <= s.speed());
                    prop_assert_eq!(s.window().len(), interval);
                    prev_min = s.min_speed();
                }
            }
        }

        #[test]
        fn monotonic_formulation_never_decreases(
            trace in prop::collection::vec(-10.0f64..10.0, 1..200),
            mass in 0.001f64..5.0,
            interval in 1usize..10,
        ) {
            let p = params(mass, interval, FrictionFormulation::Monotonic);
            let mut s = FrictionState::new(&p, 0.0, 0);
            let mut last = 0.0;
            for &x in &trace {
                let c = s.step(&p, x).value();
                prop_assert!(c >= last);
                last = c;
            }
        }

        #[test]
        fn exponential_in_unit_interval(t in 0u64..5000, te in 1u64..2000, s in -50.0f64..50.0) {
            prop_assume!(s.abs() > 1e-3);
            let p = ExponentialParams::new(te, s).unwrap();
            let c = exponential_progress(t, &p).value();
            prop_assert!((0.0..=1.0).contains(&c));
        }
    }
}
