//! Curve tracing: beta sweep, endpoint construction, assembly and
//! adaptive refinement.

use std::collections::HashSet;
use std::f64::consts::LN_2;

use rayon::prelude::*;

use crate::distortion::{pullback_rows, DistortionMatrix};
use crate::error::{Error, Result};
use crate::pipeline::{FiniteDistribution, LayeredPipeline};
use crate::rd::blahut::{ba_fixed_beta, min_distortion_endpoint, Solved};
use crate::rd::info::best_constant;
use crate::rd::{distortion_range, Channel, RdCurve, RdPoint, SolverConfig};

/// Distortions closer than this are treated as the same point.
const DEDUP_TOL: f64 = 1e-12;

/// Refinement may leave the configured beta range by this factor on either
/// side when an end segment still needs points.
const BETA_EXTENSION: f64 = 1e6;

/// A curve together with the channel achieving each of its points.
#[derive(Clone, Debug)]
pub struct TracedCurve {
    pub curve: RdCurve,
    /// `channels[i]` achieves `curve.points()[i]`.
    pub channels: Vec<Channel>,
}

impl TracedCurve {
    /// A channel with expected distortion exactly `distortion` (up to
    /// rounding) whose rate is at most the interpolated curve rate, built by
    /// mixing the channels of the bracketing points. `None` outside the
    /// traced range.
    pub fn channel_at(&self, distortion: f64) -> Option<Channel> {
        let pts = self.curve.points();
        let first = pts.first()?;
        let last = pts.last()?;
        if distortion < first.distortion || distortion > last.distortion {
            return None;
        }
        let hi = pts.partition_point(|p| p.distortion < distortion);
        if pts[hi].distortion == distortion || hi == 0 {
            return Some(self.channels[hi].clone());
        }
        let (a, b) = (&pts[hi - 1], &pts[hi]);
        let w = (b.distortion - distortion) / (b.distortion - a.distortion);
        self.channels[hi - 1].mix(&self.channels[hi], w).ok()
    }
}

/// Traces `R(D)` for `source` under `d`.
pub fn solve_rd_curve(
    source: &FiniteDistribution,
    d: &DistortionMatrix,
    cfg: &SolverConfig,
) -> Result<RdCurve> {
    Ok(trace_rd_curve(source, d, cfg, "x")?.curve)
}

/// Like [`solve_rd_curve`], also returning the achieving channels.
pub fn trace_rd_curve(
    source: &FiniteDistribution,
    d: &DistortionMatrix,
    cfg: &SolverConfig,
    label: &str,
) -> Result<TracedCurve> {
    cfg.validate()?;
    if d.rows() != source.alphabet() {
        return Err(Error::mismatch(
            "solve_rd_curve",
            source.len(),
            d.rows().size(),
        ));
    }
    let (d_min, d_max) = distortion_range(source, d)?;
    let (best, _) = best_constant(source, d);
    let zero_rate = Solved {
        point: RdPoint {
            rate: 0.0,
            distortion: d_max,
            beta: 0.0,
        },
        channel: Channel::constant(d.rows().size(), d.cols().size(), best)?,
    };
    if d_max - d_min <= DEDUP_TOL * d_max.max(1.0) {
        return Ok(TracedCurve {
            curve: RdCurve::new(vec![zero_rate.point], label)?,
            channels: vec![zero_rate.channel],
        });
    }

    let mut candidates = vec![zero_rate, min_distortion_endpoint(source, d, cfg)?];
    let mut tried: HashSet<u64> = HashSet::new();
    let initial: Vec<f64> = cfg
        .betas()
        .into_iter()
        .filter(|b| tried.insert(b.to_bits()))
        .collect();
    candidates.extend(solve_many(source, d, cfg, &initial)?);

    let lo_limit = cfg.beta_min / BETA_EXTENSION;
    let hi_limit = cfg.beta_max * BETA_EXTENSION;
    loop {
        let hull = assemble(&candidates);
        let budget = cfg.max_points.saturating_sub(tried.len());
        if budget == 0 {
            break;
        }
        let mut wanted = Vec::new();
        for w in hull.windows(2) {
            let (a, b) = (&candidates[w[0]].point, &candidates[w[1]].point);
            if b.distortion - a.distortion <= DEDUP_TOL || interpolation_gap(a, b) <= cfg.refine_tol
            {
                continue;
            }
            let Some(beta) = split_beta(a, b) else {
                continue;
            };
            if beta < lo_limit || beta > hi_limit || !tried.insert(beta.to_bits()) {
                continue;
            }
            wanted.push(beta);
            if wanted.len() == budget {
                break;
            }
        }
        if wanted.is_empty() {
            break;
        }
        candidates.extend(solve_many(source, d, cfg, &wanted)?);
    }

    let hull = assemble(&candidates);
    let points = hull.iter().map(|&i| candidates[i].point).collect();
    let channels = hull
        .iter()
        .map(|&i| candidates[i].channel.clone())
        .collect();
    Ok(TracedCurve {
        curve: RdCurve::new(points, label)?,
        channels,
    })
}

fn solve_many(
    source: &FiniteDistribution,
    d: &DistortionMatrix,
    cfg: &SolverConfig,
    betas: &[f64],
) -> Result<Vec<Solved>> {
    betas
        .par_iter()
        .map(|&beta| {
            ba_fixed_beta(source, d, beta, cfg).map(|(point, channel)| Solved { point, channel })
        })
        .collect()
}

/// Indices of the candidates forming the lower convex hull of the
/// achievable points, sorted by distortion.
///
/// Ties in distortion keep the lower rate, then the lower beta. Dominated
/// points go first; the hull pass then drops points lying on or above a
/// chord, which time-sharing between the chord's ends already achieves.
fn assemble(candidates: &[Solved]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&candidates[i].point, &candidates[j].point);
        a.distortion
            .total_cmp(&b.distortion)
            .then(a.rate.total_cmp(&b.rate))
            .then(a.beta.total_cmp(&b.beta))
    });

    let mut kept: Vec<usize> = Vec::with_capacity(order.len());
    for i in order {
        let p = &candidates[i].point;
        match kept.last() {
            None => kept.push(i),
            Some(&last) => {
                let q = &candidates[last].point;
                if p.rate >= q.rate {
                    continue;
                }
                if p.distortion - q.distortion <= DEDUP_TOL {
                    kept.pop();
                }
                kept.push(i);
            }
        }
    }

    let mut hull: Vec<usize> = Vec::with_capacity(kept.len());
    for i in kept {
        let p = &candidates[i].point;
        while hull.len() >= 2 {
            let o = &candidates[hull[hull.len() - 2]].point;
            let a = &candidates[hull[hull.len() - 1]].point;
            let cross = (a.distortion - o.distortion) * (p.rate - o.rate)
                - (a.rate - o.rate) * (p.distortion - o.distortion);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Slope of the curve at a solved point, in bits per distortion unit.
fn slope(beta: f64) -> f64 {
    -beta / LN_2
}

/// Upper bound on how far the chord from `a` to `b` can sit above the true
/// curve, using the tangents at both ends (the curve is convex, so it lies
/// above both tangent lines and below the chord).
fn interpolation_gap(a: &RdPoint, b: &RdPoint) -> f64 {
    let width = b.distortion - a.distortion;
    let drop = b.rate - a.rate;
    let sb = slope(b.beta);
    if a.beta.is_infinite() {
        // Only the right tangent is known; the gap peaks at the left end.
        return (a.rate - (b.rate - sb * width)).max(0.0);
    }
    let sa = slope(a.beta);
    if sa >= sb {
        return 0.0;
    }
    let cross = ((b.rate - a.rate) + sa * a.distortion - sb * b.distortion) / (sa - sb);
    let at = cross.clamp(a.distortion, b.distortion);
    let chord = a.rate + drop * (at - a.distortion) / width;
    let lower = (a.rate + sa * (at - a.distortion)).max(b.rate + sb * (at - b.distortion));
    (chord - lower).max(0.0)
}

/// Multiplier to solve between two neighbouring points: the one whose
/// tangent is parallel to the chord. On a convex curve its solution lies
/// between the two points, where the chord is furthest from the curve.
fn split_beta(a: &RdPoint, b: &RdPoint) -> Option<f64> {
    let beta = (a.rate - b.rate) / (b.distortion - a.distortion) * LN_2;
    (beta > 0.0 && beta.is_finite()).then_some(beta)
}

/// Traces the cross rate-distortion function `R_{Y2 from Y1}(D)`: the least
/// `I(Y1; Y2^)` such that `E[d_y2(g2(Y1), Y2^)] <= D`.
///
/// This is an ordinary rate-distortion problem with source `p1(y1)`,
/// reproduction alphabet `Y2` and the rectangular distortion
/// `d'[y1][y2^] = d_y2[g2(y1)][y2^]`. When `d_y2` is `None` the task
/// distortion pulled back through `h2` is used.
pub fn cross_rd_curve(
    pipeline: &LayeredPipeline,
    d_y2: Option<&DistortionMatrix>,
    cfg: &SolverConfig,
) -> Result<RdCurve> {
    Ok(trace_cross_curve(pipeline, d_y2, cfg)?.curve)
}

pub fn trace_cross_curve(
    pipeline: &LayeredPipeline,
    d_y2: Option<&DistortionMatrix>,
    cfg: &SolverConfig,
) -> Result<TracedCurve> {
    let derived;
    let d_y2 = match d_y2 {
        Some(d) => d,
        None => {
            derived = pipeline.distortion_on_y2();
            &derived
        }
    };
    if !d_y2.is_square() || d_y2.rows() != pipeline.g2().codomain() {
        return Err(Error::mismatch(
            "cross_rd_curve (Y2 distortion)",
            pipeline.g2().codomain().size(),
            d_y2.rows().size(),
        ));
    }
    let rect = pullback_rows(d_y2, pipeline.g2())?;
    trace_rd_curve(&pipeline.y1_distribution(), &rect, cfg, "cross")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distortion::expected_distortion;
    use crate::pipeline::{DeterministicMap, DistortionKind, PipelineSizes};
    use crate::rd::{entropy, mutual_information, rate_at};

    fn hb(p: f64) -> f64 {
        if p <= 0.0 || p >= 1.0 {
            return 0.0;
        }
        -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
    }

    fn binary() -> (FiniteDistribution, DistortionMatrix) {
        (
            FiniteDistribution::uniform(2).unwrap(),
            DistortionMatrix::hamming(2).unwrap(),
        )
    }

    #[test]
    fn degenerate_curves_are_single_points() {
        let cfg = SolverConfig::default();
        let one = FiniteDistribution::uniform(1).unwrap();
        let c = solve_rd_curve(&one, &DistortionMatrix::hamming(1).unwrap(), &cfg).unwrap();
        assert_eq!(c.points().len(), 1);
        assert_eq!((c.points()[0].distortion, c.points()[0].rate), (0.0, 0.0));

        let u = FiniteDistribution::uniform(3).unwrap();
        let c = solve_rd_curve(&u, &DistortionMatrix::zeros(3, 3).unwrap(), &cfg).unwrap();
        assert_eq!(c.points().len(), 1);
        assert_eq!((c.points()[0].distortion, c.points()[0].rate), (0.0, 0.0));
    }

    #[test]
    fn binary_curve_matches_closed_form() {
        let (u, h) = binary();
        let curve = solve_rd_curve(&u, &h, &SolverConfig::default()).unwrap();
        for p in curve.points() {
            assert!((p.rate - (1.0 - hb(p.distortion))).abs() < 1e-6, "{p:?}");
        }
        for k in 0..=50 {
            let dist = 0.5 * k as f64 / 50.0;
            let r = rate_at(&curve, dist).unwrap();
            assert!((r - (1.0 - hb(dist))).abs() < 1e-3, "D={dist} r={r}");
        }
        assert_eq!(rate_at(&curve, 0.5).unwrap(), 0.0);
        assert!((rate_at(&curve, 0.25).unwrap() - 0.1887).abs() < 2e-3);
        assert!(curve.convexity_defect() <= 1e-6);
        assert!((curve.max_rate() - entropy(&u)).abs() < 1e-9);
    }

    #[test]
    fn traced_channels_reproduce_points() {
        let p = crate::pipeline::random_pipeline(
            11,
            PipelineSizes::new(5, 4, 3, 3),
            DistortionKind::RandomNonnegative,
        )
        .unwrap();
        let src = p.y1_distribution();
        let d = p.distortion_on_y1();
        let traced = trace_rd_curve(&src, &d, &SolverConfig::default(), "y1").unwrap();
        for (pt, ch) in traced.curve.points().iter().zip(&traced.channels) {
            assert!((mutual_information(&src, ch).unwrap() - pt.rate).abs() < 1e-9);
            assert!((expected_distortion(&src, ch, &d).unwrap() - pt.distortion).abs() < 1e-9);
        }
        let mid = 0.5
            * (traced.curve.points()[0].distortion
                + traced.curve.points().last().unwrap().distortion);
        let ch = traced.channel_at(mid).unwrap();
        assert!((expected_distortion(&src, &ch, &d).unwrap() - mid).abs() < 1e-12);
        assert!(
            mutual_information(&src, &ch).unwrap() <= rate_at(&traced.curve, mid).unwrap() + 1e-12
        );
    }

    #[test]
    fn cross_curve_special_cases() {
        let cfg = SolverConfig::default();
        let base = crate::pipeline::random_pipeline(
            5,
            PipelineSizes::new(4, 4, 4, 3),
            DistortionKind::Hamming,
        )
        .unwrap();

        // g2 = identity: the cross problem is the ordinary one on Y1.
        let id = LayeredPipeline::new(
            base.source().clone(),
            base.g1().clone(),
            DeterministicMap::identity(4).unwrap(),
            base.h2().clone(),
            base.task_distortion().clone(),
        )
        .unwrap();
        let d_y2 = id.distortion_on_y2();
        let cross = cross_rd_curve(&id, Some(&d_y2), &cfg).unwrap();
        let own = solve_rd_curve(&id.y1_distribution(), &d_y2, &cfg).unwrap();
        assert_eq!(cross.points(), own.points());

        // g2 constant: reproduce the constant at zero rate and distortion.
        let constant = LayeredPipeline::new(
            base.source().clone(),
            base.g1().clone(),
            DeterministicMap::constant(4, 4, 2).unwrap(),
            base.h2().clone(),
            base.task_distortion().clone(),
        )
        .unwrap();
        let c = cross_rd_curve(
            &constant,
            Some(&DistortionMatrix::hamming(4).unwrap()),
            &cfg,
        )
        .unwrap();
        assert_eq!(c.points().len(), 1);
        assert_eq!((c.points()[0].distortion, c.points()[0].rate), (0.0, 0.0));

        assert!(cross_rd_curve(&base, Some(&DistortionMatrix::hamming(3).unwrap()), &cfg).is_err());
    }

    #[test]
    fn cross_curve_below_self_curve() {
        let cfg = SolverConfig::default();
        let p = crate::pipeline::random_pipeline(
            21,
            PipelineSizes::new(6, 4, 3, 3),
            DistortionKind::Hamming,
        )
        .unwrap();
        let d_y2 = DistortionMatrix::hamming(3).unwrap();
        let d_y1 = crate::distortion::pullback_distortion(&d_y2, p.g2()).unwrap();
        let cross = cross_rd_curve(&p, Some(&d_y2), &cfg).unwrap();
        let own = solve_rd_curve(&p.y1_distribution(), &d_y1, &cfg).unwrap();
        for pt in cross.points() {
            assert!(pt.rate <= rate_at(&own, pt.distortion).unwrap() + 1e-4);
        }
    }

    #[test]
    fn gap_bound_is_zero_for_tangent_consistent_points() {
        let a = RdPoint {
            rate: 1.0,
            distortion: 0.0,
            beta: 2.0 * LN_2,
        };
        let b = RdPoint {
            rate: 0.0,
            distortion: 0.5,
            beta: 2.0 * LN_2,
        };
        assert_eq!(interpolation_gap(&a, &b), 0.0);
        let a = RdPoint {
            rate: 1.0,
            distortion: 0.0,
            beta: 10.0,
        };
        let b = RdPoint {
            rate: 0.0,
            distortion: 1.0,
            beta: 0.0,
        };
        assert!(interpolation_gap(&a, &b) > 0.0);
    }

    #[test]
    fn split_beta_cases() {
        let pt = |distortion: f64, rate: f64| RdPoint {
            rate,
            distortion,
            beta: 1.0,
        };
        let beta = split_beta(&pt(0.0, 1.0), &pt(0.5, 0.0)).unwrap();
        assert!((beta - 2.0 * LN_2).abs() < 1e-15);
        assert_eq!(split_beta(&pt(0.0, 0.0), &pt(0.5, 0.0)), None);
    }
}
