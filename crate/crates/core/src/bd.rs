//! Bjontegaard delta metrics and Lagrangian operating-point selection.
//!
//! The classic cubic variant: each curve is fitted by a least-squares cubic
//! in the `log10(rate)` domain, the fits are integrated exactly over the
//! range both curves cover, and the average gap is reported. No curve is
//! ever extrapolated; when the ranges do not overlap the result is absent
//! and says why.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name recorded in every [`BdResult`].
pub const BD_VARIANT: &str = "cubic";

/// Smallest ratio of singular values accepted from the least-squares fit.
const FIT_RCOND: f64 = 1e-12;

/// Relative gap below which two Lagrangian losses count as tied.
const LOSS_TIE_RTOL: f64 = 1e-12;

/// Measured rate-quality points of one coding scheme.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateQualityCurve {
    points: Vec<(f64, f64)>,
    quality_metric: String,
    curve_label: String,
}

impl RateQualityCurve {
    /// `points` are `(rate, quality)` pairs, rate in bits per pixel.
    pub fn new(
        points: Vec<(f64, f64)>,
        quality_metric: impl Into<String>,
        curve_label: impl Into<String>,
    ) -> Result<Self> {
        if points.len() < 4 {
            return Err(Error::invalid(format!(
                "a cubic fit needs at least 4 points, got {}",
                points.len()
            )));
        }
        for (i, &(r, q)) in points.iter().enumerate() {
            if !(r > 0.0 && r.is_finite() && q.is_finite()) {
                return Err(Error::invalid(format!(
                    "point {i} is ({r}, {q}); rates must be positive and finite"
                )));
            }
        }
        for (i, w) in points.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(Error::invalid(format!(
                    "rate not strictly increasing at point {}",
                    i + 1
                )));
            }
            if w[1].1 <= w[0].1 {
                return Err(Error::invalid(format!(
                    "quality not strictly increasing at point {}",
                    i + 1
                )));
            }
        }
        Ok(RateQualityCurve {
            points,
            quality_metric: quality_metric.into(),
            curve_label: curve_label.into(),
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn quality_metric(&self) -> &str {
        &self.quality_metric
    }

    pub fn curve_label(&self) -> &str {
        &self.curve_label
    }

    fn log_rates(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.0.log10()).collect()
    }

    fn qualities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }

    /// Same curve with every rate multiplied by `factor`.
    pub fn scale_rates(&self, factor: f64) -> Result<Self> {
        let pts = self.points.iter().map(|&(r, q)| (r * factor, q)).collect();
        Self::new(pts, self.quality_metric.clone(), self.curve_label.clone())
    }

    /// Same curve with `delta` added to every quality value.
    pub fn shift_quality(&self, delta: f64) -> Result<Self> {
        let pts = self.points.iter().map(|&(r, q)| (r, q + delta)).collect();
        Self::new(pts, self.quality_metric.clone(), self.curve_label.clone())
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.curve_label = label.into();
        self
    }
}

/// A cubic `y(x)`, stored in the centred variable `u = (x - center) / scale`
/// to keep the least-squares system well conditioned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cubic {
    /// Coefficients of `1, u, u^2, u^3`.
    pub coefficients: [f64; 4],
    pub center: f64,
    pub scale: f64,
    /// Root-mean-square residual of the fit.
    pub rms_residual: f64,
    pub max_residual: f64,
}

impl Cubic {
    fn fit(x: &[f64], y: &[f64]) -> Result<Cubic> {
        let n = x.len();
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let center = 0.5 * (lo + hi);
        let scale = 0.5 * (hi - lo);
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::FitFailure(format!("abscissae span [{lo}, {hi}]")));
        }
        let a = DMatrix::from_fn(n, 4, |i, k| ((x[i] - center) / scale).powi(k as i32));
        let svd = a.clone().svd(true, true);
        let sv = &svd.singular_values;
        let smax = sv.max();
        let smin = sv.min();
        if smin.partial_cmp(&(FIT_RCOND * smax)) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::FitFailure(format!(
                "singular design matrix (singular values {smin:e} / {smax:e})"
            )));
        }
        let b = DVector::from_column_slice(y);
        let c = svd
            .solve(&b, 0.0)
            .map_err(|e| Error::FitFailure(e.to_string()))?;
        let residuals = &a * &c - &b;
        let coefficients = [c[0], c[1], c[2], c[3]];
        Ok(Cubic {
            coefficients,
            center,
            scale,
            rms_residual: (residuals.norm_squared() / n as f64).sqrt(),
            max_residual: residuals.amax(),
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let u = (x - self.center) / self.scale;
        let c = &self.coefficients;
        ((c[3] * u + c[2]) * u + c[1]) * u + c[0]
    }

    /// Exact `integral from lo to hi of y(x) dx`.
    pub fn integral(&self, lo: f64, hi: f64) -> f64 {
        let c = &self.coefficients;
        let anti = |x: f64| {
            let u = (x - self.center) / self.scale;
            (((c[3] / 4.0 * u + c[2] / 3.0) * u + c[1] / 2.0) * u + c[0]) * u
        };
        self.scale * (anti(hi) - anti(lo))
    }

    /// Coefficients of `1, x, x^2, x^3` in the original variable.
    pub fn monomial_coefficients(&self) -> [f64; 4] {
        let [c0, c1, c2, c3] = self.coefficients;
        let (m, s) = (self.center, self.scale);
        // Expand sum c_k ((x - m) / s)^k.
        let a1 = c1 / s;
        let a2 = c2 / (s * s);
        let a3 = c3 / (s * s * s);
        [
            c0 - a1 * m + a2 * m * m - a3 * m * m * m,
            a1 - 2.0 * a2 * m + 3.0 * a3 * m * m,
            a2 - 3.0 * a3 * m,
            a3,
        ]
    }
}

/// Both fits of one curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogPolyFit {
    /// Quality as a function of `log10(rate)`.
    pub forward: Cubic,
    /// `log10(rate)` as a function of quality.
    pub inverse: Cubic,
}

pub fn fit_log_poly(curve: &RateQualityCurve) -> Result<LogPolyFit> {
    let lr = curve.log_rates();
    let q = curve.qualities();
    Ok(LogPolyFit {
        forward: Cubic::fit(&lr, &q)?,
        inverse: Cubic::fit(&q, &lr)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BdResult {
    pub bd_rate_percent: Option<f64>,
    pub bd_quality: Option<f64>,
    /// Integration interval: quality for BD-rate, `log10(rate)` for
    /// BD-quality.
    pub overlap: Option<(f64, f64)>,
    pub reference_label: String,
    pub test_label: String,
    pub quality_metric: String,
    pub variant: String,
    /// Why the value is absent, when it is.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl BdResult {
    fn empty(reference: &RateQualityCurve, test: &RateQualityCurve) -> Self {
        BdResult {
            bd_rate_percent: None,
            bd_quality: None,
            overlap: None,
            reference_label: reference.curve_label.clone(),
            test_label: test.curve_label.clone(),
            quality_metric: reference.quality_metric.clone(),
            variant: BD_VARIANT.to_string(),
            reason: None,
        }
    }

    fn absent(mut self, reason: impl Into<String>) -> Self {
        self.reason = Some(reason.into());
        self
    }
}

fn check_metrics(reference: &RateQualityCurve, test: &RateQualityCurve) -> Result<()> {
    if reference.quality_metric != test.quality_metric {
        return Err(Error::invalid(format!(
            "quality metrics differ: `{}` vs `{}`",
            reference.quality_metric, test.quality_metric
        )));
    }
    Ok(())
}

fn overlap(a: &[f64], b: &[f64]) -> Option<(f64, f64)> {
    let lo = a[0].max(b[0]);
    let hi = a[a.len() - 1].min(b[b.len() - 1]);
    (lo < hi).then_some((lo, hi))
}

fn average_gap(reference: &Cubic, test: &Cubic, (lo, hi): (f64, f64)) -> f64 {
    (test.integral(lo, hi) - reference.integral(lo, hi)) / (hi - lo)
}

/// Average rate difference at equal quality, as a percentage of the
/// reference rate. Negative means the test curve needs fewer bits.
pub fn bd_rate(reference: &RateQualityCurve, test: &RateQualityCurve) -> Result<BdResult> {
    check_metrics(reference, test)?;
    let out = BdResult::empty(reference, test);
    let Some(range) = overlap(&reference.qualities(), &test.qualities()) else {
        return Ok(out.absent("no overlap"));
    };
    let (fr, ft) = match (fit_log_poly(reference), fit_log_poly(test)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Ok(out.absent(format!("fit failure: {e}"))),
    };
    let avg = average_gap(&fr.inverse, &ft.inverse, range);
    Ok(BdResult {
        bd_rate_percent: Some((10f64.powf(avg) - 1.0) * 100.0),
        overlap: Some(range),
        ..out
    })
}

/// Average quality difference at equal rate. Positive means the test curve
/// is better.
pub fn bd_quality(reference: &RateQualityCurve, test: &RateQualityCurve) -> Result<BdResult> {
    check_metrics(reference, test)?;
    let out = BdResult::empty(reference, test);
    let Some(range) = overlap(&reference.log_rates(), &test.log_rates()) else {
        return Ok(out.absent("no overlap"));
    };
    let (fr, ft) = match (fit_log_poly(reference), fit_log_poly(test)) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(e), _) | (_, Err(e)) => return Ok(out.absent(format!("fit failure: {e}"))),
    };
    Ok(BdResult {
        bd_quality: Some(average_gap(&fr.forward, &ft.forward, range)),
        overlap: Some(range),
        ..out
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub rate: f64,
    pub d_enh: f64,
    pub d_base: f64,
    #[serde(default)]
    pub label: String,
}

impl OperatingPoint {
    pub fn new(rate: f64, d_enh: f64, d_base: f64, label: impl Into<String>) -> Result<Self> {
        let p = OperatingPoint {
            rate,
            d_enh,
            d_base,
            label: label.into(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("rate", self.rate),
            ("d_enh", self.d_enh),
            ("d_base", self.d_base),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!(
                    "operating point `{}`: {name} = {v} must be finite and >= 0",
                    self.label
                )));
            }
        }
        Ok(())
    }

    /// `rate + lambda * (d_enh + w * d_base)`.
    pub fn loss(&self, lambda: f64, w: f64) -> f64 {
        self.rate + lambda * (self.d_enh + w * self.d_base)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub index: usize,
    pub point: OperatingPoint,
    pub loss: f64,
}

/// The point minimizing `rate + lambda * (d_enh + w * d_base)`. Losses within
/// a relative `1e-12` of each other tie; ties go to the lower rate, then the
/// earlier point.
pub fn lagrangian_select(points: &[OperatingPoint], lambda: f64, w: f64) -> Result<Selection> {
    if points.is_empty() {
        return Err(Error::invalid("no operating points to select from"));
    }
    for (name, v) in [("lambda", lambda), ("w", w)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    points[0].validate()?;
    let mut best = 0;
    let mut best_loss = points[0].loss(lambda, w);
    for (i, p) in points.iter().enumerate().skip(1) {
        p.validate()?;
        let loss = p.loss(lambda, w);
        let tie = (loss - best_loss).abs() <= LOSS_TIE_RTOL * loss.abs().max(best_loss.abs());
        if (loss < best_loss && !tie) || (tie && p.rate < points[best].rate) {
            best = i;
            best_loss = loss;
        }
    }
    Ok(Selection {
        index: best,
        point: points[best].clone(),
        loss: best_loss,
    })
}
