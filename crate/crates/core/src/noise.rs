//! Noise functions that perturb a complexity before it is mapped to a task,
//! modelling a badly formulated mapping function.
//!
//! * `local` / `global`: monotone perturbations. Knot increments are drawn
//!   from a normal distribution truncated to `[0, 1]` (mean 0.5), summed and
//!   normalised to run from `(0, 0)` to `(1, 1)`, then joined with a
//!   monotonicity-preserving cubic (three-point slopes passed through
//!   Hyman's filter). Many knots give sharp local wiggles, few knots give a
//!   smooth large deviation.
//! * `random`: equally spaced knots with uniform heights, endpoints pinned to
//!   0 and 1, joined by a natural cubic spline and clipped to `[0, 1]`.
//!   Ordering is not preserved.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::progression::Complexity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Identity,
    #[serde(alias = "short")]
    Local,
    #[serde(alias = "long")]
    Global,
    Random,
}

impl NoiseKind {
    /// Default `(knots, sigma)` for the kind. Sigma is unused by `random`.
    pub fn preset(self) -> (usize, f64) {
        match self {
            NoiseKind::Identity => (1, 0.0),
            NoiseKind::Local => (25, 0.35),
            NoiseKind::Global => (4, 0.35),
            NoiseKind::Random => (8, 0.0),
        }
    }
}

/// Noise selection as written in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            kind: NoiseKind::Identity,
            knots: None,
            sigma: None,
        }
    }
}

impl NoiseConfig {
    pub fn resolved(&self) -> (usize, f64) {
        let (n, sigma) = self.kind.preset();
        (self.knots.unwrap_or(n), self.sigma.unwrap_or(sigma))
    }

    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.kind == NoiseKind::Identity {
            return out;
        }
        let (n, sigma) = self.resolved();
        if n < 2 {
            out.push(format!("noise.knots = {n} must be at least 2"));
        }
        if self.kind != NoiseKind::Random && !(sigma > 0.0 && sigma.is_finite()) {
            out.push(format!("noise.sigma = {sigma} must be positive"));
        }
        out
    }

    pub fn generate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<NoiseFunction> {
        let (n, sigma) = self.resolved();
        match self.kind {
            NoiseKind::Identity => Ok(NoiseFunction::identity()),
            NoiseKind::Local | NoiseKind::Global => {
                let mut f = gen_monotone_noise(n, sigma, rng)?;
                f.kind = self.kind;
                Ok(f)
            }
            NoiseKind::Random => gen_random_noise(n, rng),
        }
    }
}

/// A tabulated function `[0, 1] -> [0, 1]` with `N(0) = 0` and `N(1) = 1`,
/// stored as cubic Hermite knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseFunction {
    kind: NoiseKind,
    xs: Vec<f64>,
    ys: Vec<f64>,
    slopes: Vec<f64>,
}

impl NoiseFunction {
    pub fn identity() -> Self {
        Self {
            kind: NoiseKind::Identity,
            xs: vec![0.0, 1.0],
            ys: vec![0.0, 1.0],
            slopes: vec![1.0, 1.0],
        }
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.kind == NoiseKind::Identity {
            return x.clamp(0.0, 1.0);
        }
        let x = x.clamp(0.0, 1.0);
        // first knot strictly greater than x
        let hi = self.xs.partition_point(|&k| k <= x);
        if hi == 0 {
            return self.ys[0];
        }
        if hi == self.xs.len() || self.xs[hi - 1] == x {
            return self.ys[hi - 1];
        }
        let i = hi - 1;
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        let y = h00 * self.ys[i]
            + h10 * h * self.slopes[i]
            + h01 * self.ys[i + 1]
            + h11 * h * self.slopes[i + 1];
        y.clamp(0.0, 1.0)
    }
}

/// `N(c)`, the perturbed complexity.
pub fn apply_noise(noise: &NoiseFunction, c: Complexity) -> Complexity {
    Complexity::saturating(noise.eval(c.value()))
}

fn truncated_normal<R: Rng + ?Sized>(normal: &Normal<f64>, rng: &mut R) -> f64 {
    loop {
        let v = normal.sample(rng);
        if (0.0..=1.0).contains(&v) {
            return v;
        }
    }
}

/// Monotone noise from `n + 1` truncated-normal increments.
pub fn gen_monotone_noise<R: Rng + ?Sized>(
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<NoiseFunction> {
    if n < 2 {
        return Err(Error::invalid("knots", format!("need at least 2, got {n}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(
            "sigma",
            format!("must be positive, got {sigma}"),
        ));
    }
    let normal = Normal::new(0.5, sigma).map_err(|e| Error::invalid("sigma", e.to_string()))?;
    let cumulative = loop {
        let mut acc = 0.0;
        let sums: Vec<f64> = (0..=n)
            .map(|_| {
                acc += truncated_normal(&normal, rng);
                acc
            })
            .collect();
        if sums[n] > sums[0] {
            break sums;
        }
    };
    let (y0, span) = (cumulative[0], cumulative[n] - cumulative[0]);
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let mut ys: Vec<f64> = cumulative.iter().map(|&y| (y - y0) / span).collect();
    ys[0] = 0.0;
    ys[n] = 1.0;
    let slopes = hyman_slopes(&xs, &ys);
    Ok(NoiseFunction {
        kind: NoiseKind::Local,
        xs,
        ys,
        slopes,
    })
}

/// Unconstrained noise: `n + 1` equally spaced knots with uniform heights.
pub fn gen_random_noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<NoiseFunction> {
    if n < 2 {
        return Err(Error::invalid("knots", format!("need at least 2, got {n}")));
    }
    let xs: Vec<f64> = (0..=n).map(|i| i as f64 / n as f64).collect();
    let mut ys: Vec<f64> = (0..=n).map(|_| rng.random::<f64>()).collect();
    ys[0] = 0.0;
    ys[n] = 1.0;
    let slopes = natural_spline_slopes(&xs, &ys);
    Ok(NoiseFunction {
        kind: NoiseKind::Random,
        xs,
        ys,
        slopes,
    })
}

fn secants(xs: &[f64], ys: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let s = ys
        .windows(2)
        .zip(&h)
        .map(|(w, &h)| (w[1] - w[0]) / h)
        .collect();
    (h, s)
}

/// Three-point slope estimates limited by Hyman's monotonicity filter:
/// each slope keeps the sign of the neighbouring secants and is capped at
/// three times the smaller of them, which keeps every cubic piece monotone.
pub(crate) fn hyman_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let (h, s) = secants(xs, ys);
    if n == 2 {
        return vec![s[0], s[0]];
    }
    let mut d = vec![0.0; n];
    d[0] = ((2.0 * h[0] + h[1]) * s[0] - h[0] * s[1]) / (h[0] + h[1]);
    d[n - 1] =
        ((2.0 * h[n - 2] + h[n - 3]) * s[n - 2] - h[n - 2] * s[n - 3]) / (h[n - 2] + h[n - 3]);
    for i in 1..n - 1 {
        d[i] = (h[i] * s[i - 1] + h[i - 1] * s[i]) / (h[i - 1] + h[i]);
    }

    let limit_end = |d: f64, secant: f64| {
        if secant == 0.0 || d.signum() != secant.signum() {
            0.0
        } else {
            secant.signum() * d.abs().min(3.0 * secant.abs())
        }
    };
    d[0] = limit_end(d[0], s[0]);
    d[n - 1] = limit_end(d[n - 1], s[n - 2]);
    for i in 1..n - 1 {
        let (a, b) = (s[i - 1], s[i]);
        d[i] = if a * b > 0.0 {
            let sigma = b.signum();
            sigma * (sigma * d[i]).max(0.0).min(3.0 * a.abs().min(b.abs()))
        } else {
            0.0
        };
    }
    d
}

/// Knot slopes of the natural cubic spline (zero curvature at both ends),
/// so it can be evaluated in Hermite form.
pub(crate) fn natural_spline_slopes(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let (h, s) = secants(xs, ys);
    // Second derivatives m[0..n] with m[0] = m[n-1] = 0; Thomas algorithm
    // on the interior system.
    let mut m = vec![0.0; n];
    if n > 2 {
        let k = n - 2;
        let mut diag = vec![0.0; k];
        let mut rhs = vec![0.0; k];
        for j in 0..k {
            let i = j + 1;
            diag[j] = 2.0 * (h[i - 1] + h[i]);
            rhs[j] = 6.0 * (s[i] - s[i - 1]);
        }
        for j in 1..k {
            let w = h[j] / diag[j - 1];
            diag[j] -= w * h[j];
            rhs[j] -= w * rhs[j - 1];
        }
        m[k] = rhs[k - 1] / diag[k - 1];
        for j in (0..k - 1).rev() {
            m[j + 1] = (rhs[j] - h[j + 1] * m[j + 2]) / diag[j];
        }
    }
    let mut d = vec![0.0; n];
    for i in 0..n - 1 {
        d[i] = s[i] - h[i] * (2.0 * m[i] + m[i + 1]) / 6.0;
    }
    d[n - 1] = s[n - 2] + h[n - 2] * (m[n - 2] + 2.0 * m[n - 1]) / 6.0;
    d
}
