//! Blahut-Arimoto alternating minimization at a fixed trade-off.
//!
//! For a multiplier `beta > 0` the algorithm alternates
//!
//! 1. `q(x^) = sum_x p(x) p(x^|x)`
//! 2. `p(x^|x) ∝ q(x^) exp(-beta d[x][x^])`
//!
//! and converges to the point of the rate-distortion curve where the slope
//! is `-beta / ln 2` bits per distortion unit. Exponentials are evaluated in
//! the log domain with a per-row max shift, so large `beta` cannot overflow.

use crate::distortion::{expected_distortion, DistortionMatrix};
use crate::error::{Error, Result};
use crate::pipeline::FiniteDistribution;
use crate::rd::{mutual_information, Channel, RdPoint, SolverConfig};

/// One solved trade-off point and the channel that achieves it.
#[derive(Clone, Debug)]
pub(crate) struct Solved {
    pub point: RdPoint,
    pub channel: Channel,
}

fn check_dims(source: &FiniteDistribution, d: &DistortionMatrix) -> Result<()> {
    if d.rows() != source.alphabet() {
        return Err(Error::mismatch(
            "rate-distortion problem",
            source.len(),
            d.rows().size(),
        ));
    }
    Ok(())
}

/// Runs the alternating updates for a single `beta`.
pub fn ba_fixed_beta(
    source: &FiniteDistribution,
    d: &DistortionMatrix,
    beta: f64,
    cfg: &SolverConfig,
) -> Result<(RdPoint, Channel)> {
    cfg.validate()?;
    check_dims(source, d)?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(Error::invalid(format!(
            "beta must be positive and finite, got {beta}"
        )));
    }
    let solved = iterate(
        source,
        d,
        cfg,
        |x, j, log_q| log_q - beta * d.get(x, j),
        beta,
    )?;
    Ok((solved.point, solved.channel))
}

/// The `beta -> infinity` end of the curve: the least-rate channel among
/// those that only use per-row minimum-distortion reproductions.
pub(crate) fn min_distortion_endpoint(
    source: &FiniteDistribution,
    d: &DistortionMatrix,
    cfg: &SolverConfig,
) -> Result<Solved> {
    let row_min: Vec<f64> = d
        .rows()
        .symbols()
        .map(|x| d.row(x).iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    let allowed = |x: usize, j: usize| {
        let m = row_min[x];
        d.get(x, j) <= m + 1e-12 * m.abs().max(1.0)
    };
    iterate(
        source,
        d,
        cfg,
        |x, j, log_q| {
            if allowed(x, j) {
                log_q
            } else {
                f64::NEG_INFINITY
            }
        },
        f64::INFINITY,
    )
}

/// Shared alternating-minimization loop. `log_kernel(x, j, ln q_j)` returns
/// the unnormalized log-weight of reproduction `j` for source symbol `x`;
/// it must be `ln q_j` plus a term independent of `q`.
///
/// Stops once the duality gap `max_j ln c_j - sum_j q'_j ln c_j` drops below
/// `cfg.convergence_tol`, where `c_j = q'_j / q_j` is the ratio of successive
/// output marginals (extended to pruned symbols through the kernel). The gap
/// bounds how far the Lagrangian `I + beta * D` is from its minimum, in nats.
fn iterate<K>(
    source: &FiniteDistribution,
    d: &DistortionMatrix,
    cfg: &SolverConfig,
    log_kernel: K,
    beta: f64,
) -> Result<Solved>
where
    K: Fn(usize, usize, f64) -> f64,
{
    let p = source.mass();
    let n = d.rows().size();
    let m = d.cols().size();

    let mut q = vec![1.0 / m as f64; m];
    let mut log_q = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mut channel = vec![1.0 / m as f64; n * m];
    let mut ratio = vec![0.0; m];

    for _ in 0..cfg.max_iterations {
        for (lq, &qj) in log_q.iter_mut().zip(&q) {
            *lq = if qj > 0.0 { qj.ln() } else { f64::NEG_INFINITY };
        }
        ratio.fill(0.0);
        for x in 0..n {
            let row = &mut channel[x * m..(x + 1) * m];
            if p[x] == 0.0 {
                // Contributes nothing; any row will do.
                row.fill(1.0 / m as f64);
                continue;
            }
            let mut shift = f64::NEG_INFINITY;
            for (j, w) in weights.iter_mut().enumerate() {
                *w = if log_q[j] == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    log_kernel(x, j, log_q[j])
                };
                shift = shift.max(*w);
            }
            if shift == f64::NEG_INFINITY {
                // Every admissible symbol of this row was pruned; fall back
                // to the kernel alone for it.
                for (j, w) in weights.iter_mut().enumerate() {
                    *w = log_kernel(x, j, 0.0);
                    shift = shift.max(*w);
                }
            }
            if !shift.is_finite() {
                return Err(Error::Solver {
                    beta,
                    message: format!("row {x} has no admissible reproduction"),
                });
            }
            let mut total = 0.0;
            for (c, &w) in row.iter_mut().zip(&weights) {
                *c = (w - shift).exp();
                total += *c;
            }
            for c in row.iter_mut() {
                *c /= total;
            }
            for (j, r) in ratio.iter_mut().enumerate() {
                *r += p[x] * (log_kernel(x, j, 0.0) - shift).exp() / total;
            }
        }

        q.fill(0.0);
        for x in 0..n {
            for (qj, c) in q.iter_mut().zip(&channel[x * m..(x + 1) * m]) {
                *qj += p[x] * c;
            }
        }

        let mut max_log = f64::NEG_INFINITY;
        let mut mean_log = 0.0;
        for (&r, &qj) in ratio.iter().zip(&q) {
            if r > 0.0 {
                let lr = r.ln();
                max_log = max_log.max(lr);
                if qj > 0.0 {
                    mean_log += qj * lr;
                }
            }
        }
        let gap = max_log - mean_log;
        if !gap.is_finite() {
            return Err(Error::Solver {
                beta,
                message: "non-finite duality gap during iteration".into(),
            });
        }
        if gap < cfg.convergence_tol {
            break;
        }

        // Prune negligible reproduction symbols and renormalize.
        let mut kept = 0.0;
        for qj in q.iter_mut() {
            if *qj < cfg.support_epsilon {
                *qj = 0.0;
            }
            kept += *qj;
        }
        for qj in q.iter_mut() {
            *qj /= kept;
        }
    }

    let channel = Channel::from_normalized(n, m, channel);
    let rate = mutual_information(source, &channel)?;
    let distortion = expected_distortion(source, &channel, d)?;
    if !(rate.is_finite() && distortion.is_finite()) {
        return Err(Error::Solver {
            beta,
            message: "non-finite rate or distortion".into(),
        });
    }
    Ok(Solved {
        point: RdPoint {
            rate,
            distortion,
            beta,
        },
        channel,
    })
}
