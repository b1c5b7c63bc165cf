//! Numerical checks of the two layer-depth rate bounds.
//!
//! **Deeper task features.** With distortion measured at the task output
//! and pulled back to each feature, compressing the deeper feature `Y2`
//! never needs more rate than compressing `Y1`:
//! `R_Y2(D) <= R_Y1(D)` for every `D`, with equality when `g2` is
//! invertible.
//!
//! **Two-step matching.** When the distortion is measured on intermediate
//! features instead, and `g2` has distortion magnitude 1, reproducing `Y2`
//! from `Y1` costs no more than reproducing `Y1` itself:
//! `R_{Y2 from Y1}(D) <= R_{Y1}(D)`. The argument is constructive: take a
//! channel `p*(y1^|y1)` achieving `R_{Y1}(D)` and push its output through
//! `g2`. The resulting channel meets the same distortion (magnitude 1) and,
//! by data processing along `Y1 -> Y1^ -> g2(Y1^)`, carries no more
//! information. [`verify_two_step_achievability`] replays that
//! construction on every grid point.

use serde::{Deserialize, Serialize};

use crate::distortion::{
    check_distortion_magnitude, expected_distortion, magnitude_mismatches, pullback_rows,
    DistortionMatrix,
};
use crate::error::{Error, Result};
use crate::pipeline::{DeterministicMap, FiniteDistribution, LayeredPipeline};
use crate::rd::{
    distortion_range, mutual_information, rate_at, trace_cross_curve, trace_rd_curve, Channel,
    RdCurve, SolverConfig, TracedCurve,
};

/// Default verdict tolerance, in bits.
pub const DEFAULT_THEOREM_TOL: f64 = 1e-4;

/// Slack allowed on the data processing inequality itself.
pub const DPI_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremId {
    /// `R_Y2(D) <= R_Y1(D)` under task-induced distortion.
    Thm1,
    /// `R_{Y2 from Y1}(D) <= R_{Y1}(D)` under unit distortion magnitude.
    Thm2,
}

impl std::str::FromStr for TheoremId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "thm1" => Ok(TheoremId::Thm1),
            "thm2" => Ok(TheoremId::Thm2),
            other => Err(Error::invalid(format!("unknown theorem `{other}`"))),
        }
    }
}

impl std::fmt::Display for TheoremId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TheoremId::Thm1 => "thm1",
            TheoremId::Thm2 => "thm2",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Outcome of comparing two curves on a shared distortion grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremReport {
    pub theorem_id: TheoremId,
    pub tolerance: f64,
    pub d_grid: Vec<f64>,
    /// `(dominating, dominated)` per grid point: the rate claimed to be
    /// larger first.
    #[serde(rename = "rates")]
    pub rate_pairs: Vec<(f64, f64)>,
    /// Largest excess of the dominated rate over the dominating one, or 0.
    pub max_violation: f64,
    pub verdict: Verdict,
}

impl TheoremReport {
    pub fn from_pairs(
        theorem_id: TheoremId,
        d_grid: Vec<f64>,
        rate_pairs: Vec<(f64, f64)>,
        tolerance: f64,
    ) -> Self {
        let max_violation = rate_pairs
            .iter()
            .map(|&(big, small)| small - big)
            .fold(0.0, f64::max);
        TheoremReport {
            theorem_id,
            tolerance,
            d_grid,
            rate_pairs,
            max_violation,
            verdict: if max_violation <= tolerance {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// How closely the constructive two-step channel met its two obligations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AchievabilityReport {
    /// Largest `E[d] - D` of the two-step channel over the grid (0 if
    /// always feasible).
    pub max_feasibility_excess: f64,
    /// Largest `I(Y1; g2(Y1^)) - R_Y1(D)` over the grid (0 if never above).
    pub max_rate_excess: f64,
    /// Whether `I(Y1; g2(Y1^)) <= I(Y1; Y1^)` held at every grid point.
    pub dpi_holds: bool,
    pub holds: bool,
}

/// A report plus the curves behind it.
#[derive(Clone, Debug)]
pub struct Verification {
    pub report: TheoremReport,
    pub dominating: TracedCurve,
    pub dominated: TracedCurve,
    pub achievability: Option<AchievabilityReport>,
}

/// `grid_size` evenly spaced distortions covering `[lo, hi]`.
pub fn distortion_grid(lo: f64, hi: f64, grid_size: usize) -> Vec<f64> {
    match grid_size {
        0 => Vec::new(),
        1 => vec![lo],
        n => (0..n)
            .map(|k| {
                if k + 1 == n {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

fn compare(
    id: TheoremId,
    dominating: &RdCurve,
    dominated: &RdCurve,
    grid: Vec<f64>,
    tol: f64,
) -> Result<TheoremReport> {
    let pairs = grid
        .iter()
        .map(|&d| Ok((rate_at(dominating, d)?, rate_at(dominated, d)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(TheoremReport::from_pairs(id, grid, pairs, tol))
}

fn check_grid_args(grid_size: usize, tol: f64) -> Result<()> {
    if grid_size == 0 {
        return Err(Error::invalid("grid_size must be at least 1"));
    }
    if !(tol >= 0.0 && tol.is_finite()) {
        return Err(Error::invalid(format!(
            "tolerance must be finite and >= 0, got {tol}"
        )));
    }
    Ok(())
}

/// Deeper-feature bound under task-induced distortion.
pub fn verify_theorem1(
    pipeline: &LayeredPipeline,
    grid_size: usize,
    cfg: &SolverConfig,
    tol: f64,
) -> Result<TheoremReport> {
    check_theorem1(pipeline, grid_size, cfg, tol).map(|v| v.report)
}

pub fn check_theorem1(
    pipeline: &LayeredPipeline,
    grid_size: usize,
    cfg: &SolverConfig,
    tol: f64,
) -> Result<Verification> {
    check_grid_args(grid_size, tol)?;
    let src1 = pipeline.y1_distribution();
    let src2 = pipeline.y2_distribution();
    let d1 = pipeline.distortion_on_y1();
    let d2 = pipeline.distortion_on_y2();
    let (c1, c2) = rayon::join(
        || trace_rd_curve(&src1, &d1, cfg, "y1"),
        || trace_rd_curve(&src2, &d2, cfg, "y2"),
    );
    let (c1, c2) = (c1?, c2?);
    let (lo, hi) = distortion_range(&src1, &d1)?;
    let report = compare(
        TheoremId::Thm1,
        &c1.curve,
        &c2.curve,
        distortion_grid(lo, hi, grid_size),
        tol,
    )?;
    Ok(Verification {
        report,
        dominating: c1,
        dominated: c2,
        achievability: None,
    })
}

/// Two-step bound. `d_y1` is the distortion on `Y1`; `d_y2` the one on `Y2`,
/// defaulting to the task distortion pulled back through `h2`. Fails with
/// [`Error::Precondition`] unless `g2` has distortion magnitude 1 between
/// them.
pub fn verify_theorem2(
    pipeline: &LayeredPipeline,
    d_y1: &DistortionMatrix,
    d_y2: Option<&DistortionMatrix>,
    grid_size: usize,
    cfg: &SolverConfig,
    tol: f64,
) -> Result<TheoremReport> {
    check_theorem2(pipeline, d_y1, d_y2, grid_size, cfg, tol).map(|v| v.report)
}

pub fn check_theorem2(
    pipeline: &LayeredPipeline,
    d_y1: &DistortionMatrix,
    d_y2: Option<&DistortionMatrix>,
    grid_size: usize,
    cfg: &SolverConfig,
    tol: f64,
) -> Result<Verification> {
    check_grid_args(grid_size, tol)?;
    let derived;
    let d_y2 = match d_y2 {
        Some(d) => d,
        None => {
            derived = pipeline.distortion_on_y2();
            &derived
        }
    };
    require_unit_magnitude(d_y1, d_y2, pipeline.g2())?;

    let src1 = pipeline.y1_distribution();
    let (own, cross) = rayon::join(
        || trace_rd_curve(&src1, d_y1, cfg, "y1"),
        || trace_cross_curve(pipeline, Some(d_y2), cfg),
    );
    let (own, cross) = (own?, cross?);
    let (lo, hi) = distortion_range(&src1, d_y1)?;
    let grid = distortion_grid(lo, hi, grid_size);
    let achievability = verify_two_step_achievability(pipeline, d_y2, &own, &grid, tol)?;
    let report = compare(TheoremId::Thm2, &own.curve, &cross.curve, grid, tol)?;
    Ok(Verification {
        report,
        dominating: own,
        dominated: cross,
        achievability: Some(achievability),
    })
}

fn require_unit_magnitude(
    d_y1: &DistortionMatrix,
    d_y2: &DistortionMatrix,
    g2: &DeterministicMap,
) -> Result<()> {
    let pairs = magnitude_mismatches(d_y1, d_y2, g2, 1.0)?;
    match check_distortion_magnitude(d_y1, d_y2, g2) {
        Some(delta) if pairs.is_empty() => {
            debug_assert!((delta - 1.0).abs() <= 1e-9);
            Ok(())
        }
        delta => Err(Error::Precondition {
            message: match delta {
                Some(delta) => format!("g2 has distortion magnitude {delta}, not 1"),
                None => "g2 has no single distortion magnitude".to_string(),
            },
            pairs,
        }),
    }
}

/// Replays the constructive step of the two-step bound at each grid point:
/// mixes the traced `Y1` channels to hit `D` exactly, maps the reproduction
/// through `g2`, and checks the result is feasible for the cross problem
/// and carries at most `R_Y1(D) + tol` bits.
pub fn verify_two_step_achievability(
    pipeline: &LayeredPipeline,
    d_y2: &DistortionMatrix,
    own: &TracedCurve,
    grid: &[f64],
    tol: f64,
) -> Result<AchievabilityReport> {
    let src1 = pipeline.y1_distribution();
    let rect = pullback_rows(d_y2, pipeline.g2())?;
    let pts = own.curve.points();
    let (Some(first), Some(last)) = (pts.first(), pts.last()) else {
        return Err(Error::invalid("empty Y1 curve"));
    };

    let mut report = AchievabilityReport {
        max_feasibility_excess: 0.0,
        max_rate_excess: 0.0,
        dpi_holds: true,
        holds: true,
    };
    for &target in grid {
        let target = target.clamp(first.distortion, last.distortion);
        let p_star = own
            .channel_at(target)
            .ok_or_else(|| Error::invalid(format!("no Y1 channel at distortion {target}")))?;
        let dpi = dpi_check(&src1, &p_star, pipeline.g2())?;
        let two_step = two_step_channel(&p_star, pipeline.g2())?;
        let achieved = expected_distortion(&src1, &two_step, &rect)?;
        report.max_feasibility_excess = report.max_feasibility_excess.max(achieved - target);
        report.max_rate_excess = report
            .max_rate_excess
            .max(dpi.i_after - rate_at(&own.curve, target)?);
        report.dpi_holds &= dpi.holds;
    }
    let feasibility_slack = 1e-9 * last.distortion.max(1.0);
    report.holds = report.dpi_holds
        && report.max_feasibility_excess <= feasibility_slack
        && report.max_rate_excess <= tol;
    Ok(report)
}

/// Channel `Y1 -> g2(Y1^)` induced by `p*(y1^|y1)`:
/// `out[y1][y2] = sum over y1^ with g2(y1^) = y2 of p*[y1][y1^]`.
pub fn two_step_channel(p_star: &Channel, g2: &DeterministicMap) -> Result<Channel> {
    if p_star.cols() != g2.domain() {
        return Err(Error::mismatch(
            "two_step_channel",
            g2.domain().size(),
            p_star.cols().size(),
        ));
    }
    let n = p_star.rows().size();
    let m = g2.codomain().size();
    let mut values = vec![0.0; n * m];
    for y in 0..n {
        for (j, &c) in p_star.row(y).iter().enumerate() {
            values[y * m + g2.apply(j)] += c;
        }
    }
    Ok(Channel::from_normalized(n, m, values))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpiOutcome {
    pub i_before: f64,
    pub i_after: f64,
    pub holds: bool,
}

/// `I(Y1; g2(Y1^)) <= I(Y1; Y1^)` for `Y1^ ~ p_star(.|Y1)`.
pub fn dpi_check(
    source: &FiniteDistribution,
    p_star: &Channel,
    g2: &DeterministicMap,
) -> Result<DpiOutcome> {
    let i_before = mutual_information(source, p_star)?;
    let i_after = mutual_information(source, &two_step_channel(p_star, g2)?)?;
    Ok(DpiOutcome {
        i_before,
        i_after,
        holds: i_after <= i_before + DPI_TOL,
    })
}
