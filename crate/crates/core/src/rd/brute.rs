//! Exhaustive grid search over channels, used as an oracle for the solver.

use crate::distortion::DistortionMatrix;
use crate::error::{Error, Result};
use crate::pipeline::FiniteDistribution;
use crate::rd::info::mutual_information_raw;

/// Upper limit on the number of channels [`brute_force_rd`] will enumerate.
pub const MAX_BRUTE_FORCE_CHANNELS: f64 = 2e9;

/// Least mutual information over all channels whose rows lie on the
/// `1/grid_steps` lattice of the simplex and whose expected distortion is at
/// most `max_distortion`.
///
/// The result upper-bounds the true `R(D)` and converges to it as the grid
/// is refined. Alphabets are limited to three symbols on each side, and the
/// total enumeration to [`MAX_BRUTE_FORCE_CHANNELS`].
pub fn brute_force_rd(
    source: &FiniteDistribution,
    d: &DistortionMatrix,
    max_distortion: f64,
    grid_steps: usize,
) -> Result<f64> {
    let n = d.rows().size();
    let m = d.cols().size();
    if d.rows() != source.alphabet() {
        return Err(Error::mismatch("brute_force_rd", source.len(), n));
    }
    if n > 3 || m > 3 {
        return Err(Error::invalid(format!(
            "brute force limited to 3x3 alphabets, got {n}x{m}"
        )));
    }
    if grid_steps < 100 {
        return Err(Error::invalid(format!(
            "grid_steps must be >= 100, got {grid_steps}"
        )));
    }

    let lattice = simplex_lattice(m, grid_steps);
    let p = source.mass();
    let active: Vec<usize> = (0..n).filter(|&x| p[x] > 0.0).collect();
    let total = (lattice.len() as f64).powi(active.len() as i32);
    if total > MAX_BRUTE_FORCE_CHANNELS {
        return Err(Error::invalid(format!(
            "brute force would enumerate {total:.3e} channels"
        )));
    }

    // Distortion contributed by each lattice row for each active source symbol.
    let costs: Vec<Vec<f64>> = active
        .iter()
        .map(|&x| {
            lattice
                .iter()
                .map(|row| p[x] * row.iter().zip(d.row(x)).map(|(c, dv)| c * dv).sum::<f64>())
                .collect()
        })
        .collect();
    let min_cost: Vec<f64> = costs
        .iter()
        .map(|c| c.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();
    // Minimum distortion still to be paid by rows k.. of `active`.
    let mut tail = vec![0.0; active.len() + 1];
    for k in (0..active.len()).rev() {
        tail[k] = tail[k + 1] + min_cost[k];
    }

    let slack = 1e-12 * max_distortion.abs().max(1.0);
    let mut search = Search {
        p,
        m,
        lattice: &lattice,
        active: &active,
        costs: &costs,
        tail: &tail,
        budget: max_distortion + slack,
        channel: vec![0.0; n * m],
        best: f64::INFINITY,
    };
    for (x, &px) in p.iter().enumerate() {
        if px == 0.0 {
            search.channel[x * m..(x + 1) * m].fill(1.0 / m as f64);
        }
    }
    search.descend(0, 0.0);
    if search.best.is_infinite() {
        return Err(Error::invalid(format!(
            "no channel reaches distortion {max_distortion}"
        )));
    }
    Ok(search.best)
}

struct Search<'a> {
    p: &'a [f64],
    m: usize,
    lattice: &'a [Vec<f64>],
    active: &'a [usize],
    costs: &'a [Vec<f64>],
    tail: &'a [f64],
    budget: f64,
    channel: Vec<f64>,
    best: f64,
}

impl Search<'_> {
    fn descend(&mut self, depth: usize, spent: f64) {
        if depth == self.active.len() {
            let mut q = vec![0.0; self.m];
            for (x, &px) in self.p.iter().enumerate() {
                for (j, qj) in q.iter_mut().enumerate() {
                    *qj += px * self.channel[x * self.m + j];
                }
            }
            let mi = mutual_information_raw(self.p, &self.channel, self.m, &q);
            self.best = self.best.min(mi);
            return;
        }
        let x = self.active[depth];
        for (k, row) in self.lattice.iter().enumerate() {
            let spent_here = spent + self.costs[depth][k];
            if spent_here + self.tail[depth + 1] > self.budget {
                continue;
            }
            self.channel[x * self.m..(x + 1) * self.m].copy_from_slice(row);
            self.descend(depth + 1, spent_here);
        }
    }
}

/// All points of the probability simplex in `dim` dimensions with
/// coordinates in multiples of `1/steps`.
fn simplex_lattice(dim: usize, steps: usize) -> Vec<Vec<f64>> {
    fn fill(
        dim: usize,
        left: usize,
        steps: usize,
        prefix: &mut Vec<usize>,
        out: &mut Vec<Vec<f64>>,
    ) {
        if prefix.len() + 1 == dim {
            prefix.push(left);
            out.push(prefix.iter().map(|&k| k as f64 / steps as f64).collect());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            fill(dim, left - k, steps, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    fill(dim, steps, steps, &mut Vec::with_capacity(dim), &mut out);
    out
}
