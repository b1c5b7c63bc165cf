//! Rate-distortion functions over finite alphabets.
//!
//! `R(D)` is the least mutual information `I(X; X^)` over channels
//! `p(x^|x)` with `E[d(X, X^)] <= D`. Curves are traced parametrically with
//! Blahut-Arimoto over a geometric sweep of the trade-off multiplier, then
//! refined where linear interpolation between neighbouring points could
//! misstate the curve by more than [`SolverConfig::refine_tol`].
//!
//! All rates are in bits (`log2`).

mod blahut;
mod brute;
mod channel;
mod curve;
mod info;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use blahut::ba_fixed_beta;
pub use brute::{brute_force_rd, MAX_BRUTE_FORCE_CHANNELS};
pub use channel::Channel;
pub use curve::{cross_rd_curve, solve_rd_curve, trace_cross_curve, trace_rd_curve, TracedCurve};
pub use info::{distortion_range, entropy, mutual_information};

/// Rate-monotonicity slack tolerated when checking curve invariants.
pub const CURVE_RATE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    /// Bits per source symbol.
    pub rate: f64,
    pub distortion: f64,
    /// Multiplier that produced the point. `inf` marks the minimum-distortion
    /// end of a curve and `0` the zero-rate end.
    pub beta: f64,
}

/// Points sorted by increasing distortion with non-increasing rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    points: Vec<RdPoint>,
    source_label: String,
}

impl RdCurve {
    pub fn new(points: Vec<RdPoint>, source_label: impl Into<String>) -> Result<Self> {
        for (i, p) in points.iter().enumerate() {
            if !(p.rate >= 0.0 && p.rate.is_finite())
                || !(p.distortion >= 0.0 && p.distortion.is_finite())
            {
                return Err(Error::invalid(format!(
                    "point {i} has rate {} and distortion {}",
                    p.rate, p.distortion
                )));
            }
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[1].distortion <= w[0].distortion {
                return Err(Error::invalid(format!(
                    "distortion not strictly increasing at point {}",
                    i + 1
                )));
            }
            if w[1].rate > w[0].rate + CURVE_RATE_TOL {
                return Err(Error::invalid(format!("rate increases at point {}", i + 1)));
            }
        }
        Ok(RdCurve {
            points,
            source_label: source_label.into(),
        })
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_rate(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.rate)
    }

    /// Largest increase of chord slope violated by the points, i.e. how far
    /// the curve is from convex. Zero for a convex curve.
    pub fn convexity_defect(&self) -> f64 {
        let slopes: Vec<f64> = self
            .points
            .windows(2)
            .map(|w| (w[1].rate - w[0].rate) / (w[1].distortion - w[0].distortion))
            .collect();
        slopes
            .windows(2)
            .map(|s| (s[0] - s[1]).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Rate of a traced curve at distortion `distortion`.
///
/// Interpolates linearly between the bracketing points. At or beyond the
/// largest stored distortion the rate is 0; below the smallest stored
/// distortion the rate of the first point is returned (the curve is not
/// defined there, so this is a clamp rather than an extrapolation).
pub fn rate_at(curve: &RdCurve, distortion: f64) -> Result<f64> {
    let pts = curve.points();
    let (Some(first), Some(last)) = (pts.first(), pts.last()) else {
        return Err(Error::invalid("rate_at on an empty curve"));
    };
    if distortion.is_nan() {
        return Err(Error::invalid("rate_at with NaN distortion"));
    }
    if distortion >= last.distortion {
        return Ok(0.0);
    }
    if distortion <= first.distortion {
        return Ok(first.rate);
    }
    // First index with distortion > target; it is at least 1 here.
    let hi = pts.partition_point(|p| p.distortion <= distortion);
    let (a, b) = (&pts[hi - 1], &pts[hi]);
    let t = (distortion - a.distortion) / (b.distortion - a.distortion);
    Ok(a.rate + t * (b.rate - a.rate))
}

/// Knobs for curve tracing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Number of multipliers in the initial geometric sweep.
    pub beta_count: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    /// Iteration cap for a single multiplier.
    pub max_iterations: usize,
    /// Stop once the Lagrangian duality gap (nats) falls below this.
    pub convergence_tol: f64,
    /// Reproduction symbols whose output mass drops below this are pruned.
    pub support_epsilon: f64,
    /// Largest interpolation error, in bits, left unrefined between
    /// neighbouring curve points.
    pub refine_tol: f64,
    /// Cap on the number of multipliers solved for one curve.
    pub max_points: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            beta_count: 48,
            beta_min: 1e-2,
            beta_max: 1e3,
            max_iterations: 100_000,
            convergence_tol: 1e-13,
            support_epsilon: 1e-15,
            refine_tol: 1e-6,
            max_points: 2048,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("solver config: {msg}")));
        if self.beta_count == 0 || self.max_iterations == 0 || self.max_points == 0 {
            return bad("counts must be at least 1".into());
        }
        if !(self.beta_min > 0.0 && self.beta_min.is_finite() && self.beta_max.is_finite()) {
            return bad(format!(
                "beta range [{}, {}] must be positive and finite",
                self.beta_min, self.beta_max
            ));
        }
        if self.beta_count > 1 && self.beta_min >= self.beta_max {
            return bad(format!(
                "beta_min {} must be below beta_max {}",
                self.beta_min, self.beta_max
            ));
        }
        if !(self.convergence_tol > 0.0 && self.refine_tol > 0.0) {
            return bad("tolerances must be positive".into());
        }
        if !(self.support_epsilon > 0.0 && self.support_epsilon < 1e-6) {
            return bad(format!(
                "support_epsilon {} must lie in (0, 1e-6)",
                self.support_epsilon
            ));
        }
        Ok(())
    }

    /// The initial geometric sweep, increasing.
    pub fn betas(&self) -> Vec<f64> {
        if self.beta_count == 1 {
            return vec![self.beta_min];
        }
        let ratio = (self.beta_max / self.beta_min).ln() / (self.beta_count - 1) as f64;
        (0..self.beta_count)
            .map(|i| {
                if i + 1 == self.beta_count {
                    self.beta_max
                } else {
                    self.beta_min * (ratio * i as f64).exp()
                }
            })
            .collect()
    }
}
