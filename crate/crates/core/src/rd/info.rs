//! Information measures in bits.

use crate::distortion::DistortionMatrix;
use crate::error::{Error, Result};
use crate::pipeline::FiniteDistribution;
use crate::rd::Channel;

/// `H(X) = -sum p log2 p`, with `0 log 0 = 0`.
pub fn entropy(dist: &FiniteDistribution) -> f64 {
    dist.mass()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

/// `I(X; X^)` for `X ~ source` observed through `channel`.
pub fn mutual_information(source: &FiniteDistribution, channel: &Channel) -> Result<f64> {
    let q = channel.output_marginal(source)?;
    Ok(mutual_information_with(source.mass(), channel, &q))
}

pub(crate) fn mutual_information_with(p: &[f64], channel: &Channel, q: &[f64]) -> f64 {
    mutual_information_raw(p, channel.values(), channel.cols().size(), q)
}

/// Same as [`mutual_information`] over a row-major channel with `m` columns
/// and a precomputed output marginal `q`.
pub(crate) fn mutual_information_raw(p: &[f64], channel: &[f64], m: usize, q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (x, &px) in p.iter().enumerate() {
        if px == 0.0 {
            continue;
        }
        let mut row_sum = 0.0;
        for (j, &c) in channel[x * m..(x + 1) * m].iter().enumerate() {
            if c > 0.0 {
                row_sum += c * (c / q[j]).log2();
            }
        }
        total += px * row_sum;
    }
    total.max(0.0)
}

/// Feasible distortion range `(d_min, d_max)`.
///
/// `d_min = sum_x p(x) min_x^ d[x][x^]` is the smallest achievable expected
/// distortion; `d_max = min_x^ sum_x p(x) d[x][x^]` is what the best
/// constant reproduction achieves at zero rate.
pub fn distortion_range(source: &FiniteDistribution, d: &DistortionMatrix) -> Result<(f64, f64)> {
    if d.rows() != source.alphabet() {
        return Err(Error::mismatch(
            "distortion_range",
            d.rows().size(),
            source.len(),
        ));
    }
    let d_min = source
        .mass()
        .iter()
        .enumerate()
        .map(|(x, &p)| p * d.row(x).iter().copied().fold(f64::INFINITY, f64::min))
        .sum();
    let (_, d_max) = best_constant(source, d);
    Ok((d_min, d_max))
}

/// Reproduction symbol with the lowest expected distortion (lowest index on
/// ties) and that distortion.
pub(crate) fn best_constant(source: &FiniteDistribution, d: &DistortionMatrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for j in d.cols().symbols() {
        let cost: f64 = source
            .mass()
            .iter()
            .enumerate()
            .map(|(x, &p)| p * d.get(x, j))
            .sum();
        if cost < best.1 {
            best = (j, cost);
        }
    }
    best
}
