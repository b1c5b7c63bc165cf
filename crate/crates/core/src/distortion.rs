//! Distortion matrices and the task-induced constructions built from them.
//!
//! A task-induced distortion on an intermediate feature is obtained by
//! mapping both the feature and its reproduction to the task output and
//! measuring there: `d~(a, a^) = d_T(phi(a), phi(a^))`. With `phi` equal to
//! `f`, `h1` or `h2` this yields the distortion on `X`, `Y1` or `Y2`.
//!
//! # Distortion magnitude
//!
//! A map `phi` has distortion magnitude `delta` when, for every conditional
//! distribution `q(z^|z)`,
//!
//! ```text
//! E[d_after(phi(Z), phi(Z^))] = delta * E[d_before(Z, Z^)].
//! ```
//!
//! Both sides are linear in the joint law `p(z) q(z^|z)`, and every point
//! mass on a single pair `(z, z^)` is reachable (source permitting), so the
//! relation holds for all `q` exactly when it holds pointwise:
//! `d_after[phi(z)][phi(z^)] = delta * d_before[z][z^]` for every pair.
//! [`check_distortion_magnitude`] tests the pointwise form. Pairs where both
//! sides are zero constrain nothing; if no pair constrains `delta`, it is
//! reported as 1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{Alphabet, DeterministicMap, FiniteDistribution, LayeredPipeline};
use crate::rd::Channel;

/// Relative tolerance used when matching distortion ratios.
pub const MAGNITUDE_RTOL: f64 = 1e-9;

/// Nonnegative distortion `d[row][col]` between a source symbol and a
/// reproduction symbol, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistortionRows", into = "DistortionRows")]
pub struct DistortionMatrix {
    rows: Alphabet,
    cols: Alphabet,
    values: Vec<f64>,
}

/// JSON form: `{"distortion": [[...], ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct DistortionRows {
    distortion: Vec<Vec<f64>>,
}

impl TryFrom<DistortionRows> for DistortionMatrix {
    type Error = Error;

    fn try_from(raw: DistortionRows) -> Result<Self> {
        DistortionMatrix::from_rows(&raw.distortion)
    }
}

impl From<DistortionMatrix> for DistortionRows {
    fn from(d: DistortionMatrix) -> Self {
        DistortionRows {
            distortion: d.to_rows(),
        }
    }
}

impl DistortionMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        let rows = Alphabet::new(rows)?;
        let cols = Alphabet::new(cols)?;
        if values.len() != rows.size() * cols.size() {
            return Err(Error::invalid(format!(
                "{} values for a {}x{} distortion matrix",
                values.len(),
                rows.size(),
                cols.size()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(format!(
                "distortion entry ({}, {}) = {} is not finite and nonnegative",
                i / cols.size(),
                i % cols.size(),
                values[i]
            )));
        }
        Ok(DistortionMatrix { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().position(|row| row.len() != m) {
            return Err(Error::invalid(format!(
                "ragged distortion matrix: row {r} has {} entries, expected {m}",
                rows[r].len()
            )));
        }
        Self::new(n, m, rows.concat())
    }

    /// `d(a, b) = [a != b]`.
    pub fn hamming(size: usize) -> Result<Self> {
        let values = (0..size * size)
            .map(|i| if i / size == i % size { 0.0 } else { 1.0 })
            .collect();
        Self::new(size, size, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn rows(&self) -> Alphabet {
        self.rows
    }

    pub fn cols(&self) -> Alphabet {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols.size() + col]
    }

    #[inline]
    pub fn row(&self, row: usize) -> &[f64] {
        let m = self.cols.size();
        &self.values[row * m..(row + 1) * m]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.values
            .chunks(self.cols.size())
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// `out[a][a^] = d[phi(a)][phi(a^)]`.
pub fn pullback_distortion(
    d: &DistortionMatrix,
    phi: &DeterministicMap,
) -> Result<DistortionMatrix> {
    if !d.is_square() {
        return Err(Error::invalid("pullback needs a square distortion matrix"));
    }
    if d.rows() != phi.codomain() {
        return Err(Error::mismatch(
            "pullback_distortion",
            phi.codomain().size(),
            d.rows().size(),
        ));
    }
    let n = phi.domain().size();
    let values = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| d.get(phi.apply(a), phi.apply(b)))
        .collect();
    DistortionMatrix::new(n, n, values)
}

/// Rectangular distortion for reproducing `phi(A)` from `A`:
/// `out[a][b^] = d[phi(a)][b^]`.
pub fn pullback_rows(d: &DistortionMatrix, phi: &DeterministicMap) -> Result<DistortionMatrix> {
    if d.rows() != phi.codomain() {
        return Err(Error::mismatch(
            "pullback_rows",
            phi.codomain().size(),
            d.rows().size(),
        ));
    }
    let values = phi
        .table()
        .iter()
        .flat_map(|&b| d.row(b).iter().copied())
        .collect();
    DistortionMatrix::new(phi.domain().size(), d.cols().size(), values)
}

/// Returns the distortion magnitude `delta` of `phi`, if one exists.
///
/// `d_before` lives on the domain of `phi`, `d_after` on its codomain. See
/// the module docs for why the pointwise test is equivalent to the
/// expectation form. Shapes inconsistent with `phi` yield `None`.
pub fn check_distortion_magnitude(
    d_before: &DistortionMatrix,
    d_after: &DistortionMatrix,
    phi: &DeterministicMap,
) -> Option<f64> {
    if !shapes_match(d_before, d_after, phi) {
        return None;
    }
    let n = phi.domain().size();
    let pairs = || (0..n).flat_map(move |a| (0..n).map(move |b| (a, b)));

    // Anchor on the largest constrained `before` entry.
    let mut anchor: Option<(f64, f64)> = None;
    for (a, b) in pairs() {
        let before = d_before.get(a, b);
        let after = d_after.get(phi.apply(a), phi.apply(b));
        if before == 0.0 {
            if after != 0.0 {
                return None;
            }
            continue;
        }
        if anchor.is_none_or(|(bmax, _)| before > bmax) {
            anchor = Some((before, after));
        }
    }
    let Some((before, after)) = anchor else {
        return Some(1.0);
    };
    let delta = after / before;
    pairs()
        .all(|(a, b)| {
            ratio_holds(
                d_before.get(a, b),
                d_after.get(phi.apply(a), phi.apply(b)),
                delta,
            )
        })
        .then_some(delta)
}

/// Pairs `(z, z^)` of the domain at which
/// `d_after[phi(z)][phi(z^)] != delta * d_before[z][z^]`.
pub fn magnitude_mismatches(
    d_before: &DistortionMatrix,
    d_after: &DistortionMatrix,
    phi: &DeterministicMap,
    delta: f64,
) -> Result<Vec<(usize, usize)>> {
    if !shapes_match(d_before, d_after, phi) {
        return Err(Error::invalid(format!(
            "distortion shapes {}x{} / {}x{} do not fit a map {} -> {}",
            d_before.rows().size(),
            d_before.cols().size(),
            d_after.rows().size(),
            d_after.cols().size(),
            phi.domain().size(),
            phi.codomain().size()
        )));
    }
    let n = phi.domain().size();
    Ok((0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| {
            !ratio_holds(
                d_before.get(a, b),
                d_after.get(phi.apply(a), phi.apply(b)),
                delta,
            )
        })
        .collect())
}

fn shapes_match(
    d_before: &DistortionMatrix,
    d_after: &DistortionMatrix,
    phi: &DeterministicMap,
) -> bool {
    d_before.is_square()
        && d_after.is_square()
        && d_before.rows() == phi.domain()
        && d_after.rows() == phi.codomain()
}

fn ratio_holds(before: f64, after: f64, delta: f64) -> bool {
    let expected = delta * before;
    (after - expected).abs() <= MAGNITUDE_RTOL * after.abs().max(expected.abs())
}

pub fn scale_distortion(d: &DistortionMatrix, c: f64) -> Result<DistortionMatrix> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::invalid(format!(
            "scale factor must be positive, got {c}"
        )));
    }
    DistortionMatrix::new(
        d.rows().size(),
        d.cols().size(),
        d.values().iter().map(|v| v * c).collect(),
    )
}

/// Joint distortion of several downstream features computed from `Y1`:
/// `out[y][y^] = sum_k w_k * d_k[H_k(y)][H_k(y^)]`.
///
/// This is the finite-alphabet counterpart of flattening and concatenating
/// several feature tensors before taking a squared error. Weights default
/// to 1; pass `1 / total_dim` style weights for a per-dimension mean.
pub fn concat_branch_distortion(
    branches: &[(&DeterministicMap, &DistortionMatrix)],
    weights: Option<&[f64]>,
) -> Result<DistortionMatrix> {
    let Some((first, _)) = branches.first() else {
        return Err(Error::invalid("no branches to combine"));
    };
    if let Some(w) = weights {
        if w.len() != branches.len() {
            return Err(Error::invalid(format!(
                "{} weights for {} branches",
                w.len(),
                branches.len()
            )));
        }
        if let Some(bad) = w.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(Error::invalid(format!(
                "branch weight {bad} is not positive"
            )));
        }
    }
    let domain = first.domain();
    let n = domain.size();
    let mut values = vec![0.0; n * n];
    for (k, (map, d)) in branches.iter().enumerate() {
        if map.domain() != domain {
            return Err(Error::mismatch(
                "concat_branch_distortion",
                n,
                map.domain().size(),
            ));
        }
        let pulled = pullback_distortion(d, map)?;
        let w = weights.map_or(1.0, |w| w[k]);
        for (acc, v) in values.iter_mut().zip(pulled.values()) {
            *acc += w * v;
        }
    }
    DistortionMatrix::new(n, n, values)
}

/// `E[d(X, X^)] = sum_x sum_x^ p(x) p(x^|x) d[x][x^]`.
pub fn expected_distortion(
    source: &FiniteDistribution,
    channel: &Channel,
    d: &DistortionMatrix,
) -> Result<f64> {
    if channel.rows() != source.alphabet() {
        return Err(Error::mismatch(
            "expected_distortion (channel rows)",
            source.len(),
            channel.rows().size(),
        ));
    }
    if d.rows() != channel.rows() || d.cols() != channel.cols() {
        return Err(Error::invalid(format!(
            "distortion is {}x{}, channel is {}x{}",
            d.rows().size(),
            d.cols().size(),
            channel.rows().size(),
            channel.cols().size()
        )));
    }
    Ok(source
        .mass()
        .iter()
        .enumerate()
        .map(|(x, &p)| {
            p * channel
                .row(x)
                .iter()
                .zip(d.row(x))
                .map(|(q, dv)| q * dv)
                .sum::<f64>()
        })
        .sum())
}

impl LayeredPipeline {
    /// Task distortion pulled back to the input: `d_T(f(x), f(x^))`.
    pub fn distortion_on_x(&self) -> DistortionMatrix {
        pullback_distortion(self.task_distortion(), &self.f()).expect("pipeline alphabets chain")
    }

    /// Task distortion pulled back to `Y1`: `d_T(h1(y1), h1(y1^))`.
    pub fn distortion_on_y1(&self) -> DistortionMatrix {
        pullback_distortion(self.task_distortion(), &self.h1()).expect("pipeline alphabets chain")
    }

    /// Task distortion pulled back to `Y2`: `d_T(h2(y2), h2(y2^))`.
    pub fn distortion_on_y2(&self) -> DistortionMatrix {
        pullback_distortion(self.task_distortion(), self.h2()).expect("pipeline alphabets chain")
    }

    /// Joint distortion of the downstream branches, measured on `Y1`.
    pub fn branch_distortion(&self, weights: Option<&[f64]>) -> Result<DistortionMatrix> {
        let pairs: Vec<_> = self
            .branches()
            .iter()
            .map(|b| (&b.map, &b.distortion))
            .collect();
        concat_branch_distortion(&pairs, weights)
    }
}
