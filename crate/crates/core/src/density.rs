//! Histogram-based Poisson-spline density estimation.
//!
//! The estimator bins the sample into equally spaced intervals, fits a
//! Poisson regression of the bin counts on a natural cubic spline basis of
//! the bin midpoints, and normalizes the fitted curve into a density. Bin
//! counts come from a one-stage plug-in rule; spline knots are placed at
//! sample quantiles chosen relative to the histogram mode (or the median).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{solve_weighted_least_squares, Matrix};
use crate::sample::{quantile_sorted, Sample};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DensityError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("degenerate knots: {0}")]
    DegenerateKnots(String),
    #[error("Poisson spline fit failed after {} iterations (deviance trace: {trace:?})", trace.len())]
    FitFailure { trace: Vec<f64> },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

/// Equally spaced histogram; the first interval is closed on both sides,
/// all others are left-open, so every observation lands in exactly one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub boundaries: Vec<f64>,
    pub midpoints: Vec<f64>,
    pub counts: Vec<u64>,
    pub width: f64,
}

impl Histogram {
    pub fn n_intervals(&self) -> usize {
        self.counts.len()
    }

    pub fn total_count(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Midpoint of the interval holding the most observations (first such
    /// interval on ties).
    pub fn mode_midpoint(&self) -> f64 {
        let mut best = 0;
        for i in 1..self.counts.len() {
            if self.counts[i] > self.counts[best] {
                best = i;
            }
        }
        self.midpoints[best]
    }
}

pub fn build_histogram(sample: &Sample, n_intervals: usize) -> Result<Histogram, DensityError> {
    if n_intervals < 2 {
        return Err(DensityError::InvalidInput(format!(
            "need at least 2 intervals, got {n_intervals}"
        )));
    }
    let lo = sample.min();
    let hi = sample.max();
    if hi <= lo {
        return Err(DensityError::InsufficientData("sample has zero spread".into()));
    }
    let width = (hi - lo) / n_intervals as f64;
    let boundaries: Vec<f64> = (0..=n_intervals)
        .map(|i| {
            if i == n_intervals {
                hi
            } else {
                lo + width * i as f64
            }
        })
        .collect();
    let midpoints: Vec<f64> = (0..n_intervals)
        .map(|i| 0.5 * (boundaries[i] + boundaries[i + 1]))
        .collect();
    let mut counts = vec![0u64; n_intervals];
    for &v in sample.values() {
        let idx = if v <= lo {
            0
        } else {
            let raw = ((v - lo) / width).ceil() as usize;
            raw.saturating_sub(1).min(n_intervals - 1)
        };
        counts[idx] += 1;
    }
    Ok(Histogram {
        boundaries,
        midpoints,
        counts,
        width,
    })
}

/// One-stage plug-in selection of the histogram bin count.
///
/// Estimates the roughness functional psi_2 = int f'' f with a normal-scale
/// pilot bandwidth and converts the optimal bin width
/// `h = (6 / (-psi_2 n))^{1/3}` into a count. Falls back to Scott's rule if
/// the functional estimate comes out nonnegative.
pub fn select_bin_count(sample: &Sample) -> Result<usize, DensityError> {
    let n = sample.len();
    if n < 10 {
        return Err(DensityError::InsufficientData(format!(
            "bin selection needs at least 10 observations, got {n}"
        )));
    }
    let values = sample.values();
    let sorted = sample.sorted();
    let range = sorted[n - 1] - sorted[0];
    if range <= 0.0 {
        return Err(DensityError::InsufficientData("sample has zero spread".into()));
    }
    let sd = sample.variance().sqrt();
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let scale = robust_scale(sd, iqr / 1.349)
        .ok_or_else(|| DensityError::InsufficientData("sample has zero scale".into()))?;

    // pilot bandwidth for estimating psi_2 (normal-scale psi_4)
    let g = scale * (3.771_236_4 / n as f64).powf(0.2);
    let psi2 = psi2_estimate(values, g);
    let h = if psi2 < 0.0 {
        (6.0 / (-psi2 * n as f64)).cbrt()
    } else {
        // Scott's rule fallback
        3.49 * sd.max(scale) * (n as f64).powf(-1.0 / 3.0)
    };
    let n_i = (range / h).ceil() as usize;
    Ok(n_i.clamp(5, 1000))
}

fn robust_scale(sd: f64, iqr_scale: f64) -> Option<f64> {
    match (sd > 0.0, iqr_scale > 0.0) {
        (true, true) => Some(sd.min(iqr_scale)),
        (true, false) => Some(sd),
        (false, true) => Some(iqr_scale),
        (false, false) => None,
    }
}

fn psi2_estimate(values: &[f64], g: f64) -> f64 {
    let n = values.len();
    let inv_sqrt_2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let phi2 = |u: f64| {
        let v = u / g;
        (v * v - 1.0) * (-0.5 * v * v).exp() * inv_sqrt_2pi
    };
    let mut acc = n as f64 * phi2(0.0);
    for i in 0..n {
        for j in (i + 1)..n {
            acc += 2.0 * phi2(values[i] - values[j]);
        }
    }
    acc / (n as f64 * n as f64 * g * g * g)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KnotAnchor {
    Mode,
    Median,
}

/// Interior knots for the spline: `j` sample quantiles at levels spread
/// around the anchor.
///
/// With `r` the proportion of interval midpoints at or below the anchor and
/// `d = (j+1)/2`, levels run at `i r / d` left of the anchor and
/// `1 - (1-r)(j-i+1)/d` right of it. For even `j` the two index ranges
/// would share index `j/2`; the right-hand range starts one past it so the
/// total stays `j`. Coincident quantiles are collapsed and the median is
/// inserted when that loses a knot.
pub fn place_knots(
    hist: &Histogram,
    sample: &Sample,
    j: usize,
    anchor: KnotAnchor,
) -> Result<Vec<f64>, DensityError> {
    if j < 2 {
        return Err(DensityError::InvalidInput(format!("need at least 2 knots, got {j}")));
    }
    let sorted = sample.sorted();
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < j {
        return Err(DensityError::DegenerateKnots(format!(
            "{} distinct sample values cannot support {} knots",
            distinct.len(),
            j
        )));
    }
    let anchor_value = match anchor {
        KnotAnchor::Mode => hist.mode_midpoint(),
        KnotAnchor::Median => quantile_sorted(&sorted, 0.5),
    };
    let n_i = hist.n_intervals() as f64;
    let r = hist
        .midpoints
        .iter()
        .filter(|m| **m <= anchor_value)
        .count() as f64
        / n_i;
    let d = (j as f64 + 1.0) / 2.0;
    let half = j / 2;
    let mut levels = Vec::with_capacity(j);
    for i in 1..=half {
        levels.push(i as f64 * r / d);
    }
    for i in (half + 1)..=j {
        levels.push(1.0 - (1.0 - r) * (j - i + 1) as f64 / d);
    }
    let mut knots: Vec<f64> = levels
        .into_iter()
        .map(|q| quantile_sorted(&sorted, q))
        .collect();
    knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let span = (sorted[sorted.len() - 1] - sorted[0]).abs();
    dedup_close(&mut knots, 1e-12 * span);
    if knots.len() < j {
        knots.push(quantile_sorted(&sorted, 0.5));
        knots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dedup_close(&mut knots, 1e-12 * span);
    }
    if knots.len() < 2 {
        return Err(DensityError::DegenerateKnots(
            "fewer than 2 distinct knots after deduplication".into(),
        ));
    }
    Ok(knots)
}

fn dedup_close(values: &mut Vec<f64>, tol: f64) {
    values.dedup_by(|a, b| (*a - *b).abs() <= tol);
}

/// Natural cubic spline basis over interior plus boundary knots, linear
/// beyond the boundary knots. Dimension is `knots.len()` (intercept and
/// linear term included), i.e. interior count + 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaturalSplineBasis {
    /// All knots, boundary knots first and last, in scaled coordinates.
    knots: Vec<f64>,
    center: f64,
    half_span: f64,
}

impl NaturalSplineBasis {
    pub fn new(boundary: (f64, f64), interior: &[f64]) -> Result<Self, DensityError> {
        let (lo, hi) = boundary;
        if hi <= lo {
            return Err(DensityError::InvalidInput("empty boundary span".into()));
        }
        let mut all = Vec::with_capacity(interior.len() + 2);
        all.push(lo);
        all.extend(interior.iter().cloned().filter(|k| *k > lo && *k < hi));
        all.push(hi);
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (hi - lo));
        if all.len() < 2 {
            return Err(DensityError::DegenerateKnots("fewer than 2 spline knots".into()));
        }
        let center = 0.5 * (lo + hi);
        let half_span = 0.5 * (hi - lo);
        let knots = all.iter().map(|k| (k - center) / half_span).collect();
        Ok(NaturalSplineBasis {
            knots,
            center,
            half_span,
        })
    }

    pub fn dim(&self) -> usize {
        self.knots.len()
    }

    pub fn eval_into(&self, x: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        let u = (x - self.center) / self.half_span;
        out[0] = 1.0;
        out[1] = u;
        let k = self.knots.len();
        if k == 2 {
            return;
        }
        let last = self.knots[k - 1];
        let before_last = self.knots[k - 2];
        let d_last = truncated_cubic_diff(u, before_last, last);
        for (slot, idx) in (2..k).zip(0..k - 2) {
            out[slot] = truncated_cubic_diff(u, self.knots[idx], last) - d_last;
        }
    }

    pub fn eval(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.eval_into(x, &mut out);
        out
    }
}

fn truncated_cubic_diff(u: f64, knot: f64, last: f64) -> f64 {
    let p3 = |v: f64| {
        let w = v.max(0.0);
        w * w * w
    };
    (p3(u - knot) - p3(u - last)) / (last - knot)
}

/// A fitted Poisson-spline density, evaluable anywhere; zero outside the
/// observed support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFit {
    basis: NaturalSplineBasis,
    beta: Vec<f64>,
    support: (f64, f64),
    normalizer: f64,
    fitted_counts: Vec<f64>,
    deviance: f64,
    iterations: usize,
}

impl DensityFit {
    pub fn eval(&self, x: f64) -> f64 {
        if x < self.support.0 || x > self.support.1 {
            return 0.0;
        }
        let mut row = vec![0.0; self.basis.dim()];
        self.basis.eval_into(x, &mut row);
        (dot(&row, &self.beta)).exp() / self.normalizer
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.beta
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    pub fn fitted_counts(&self) -> &[f64] {
        &self.fitted_counts
    }

    pub fn deviance(&self) -> f64 {
        self.deviance
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += a[i] * b[i];
    }
    acc
}

/// Fit the Poisson regression of histogram counts on the spline basis by
/// iteratively reweighted least squares (log link).
pub fn fit_poisson_spline(hist: &Histogram, interior_knots: &[f64]) -> Result<DensityFit, DensityError> {
    let boundary = (hist.boundaries[0], *hist.boundaries.last().unwrap());
    let basis = NaturalSplineBasis::new(boundary, interior_knots)?;
    let p = basis.dim();
    let n = hist.midpoints.len();
    if n < p {
        return Err(DensityError::InsufficientData(format!(
            "{n} histogram midpoints cannot support {p} basis functions"
        )));
    }
    let mut design = Matrix::zeros(n, p);
    let mut row = vec![0.0; p];
    for (i, &m) in hist.midpoints.iter().enumerate() {
        basis.eval_into(m, &mut row);
        for (jj, &v) in row.iter().enumerate() {
            design.set(i, jj, v);
        }
    }
    let counts: Vec<f64> = hist.counts.iter().map(|c| *c as f64).collect();

    let mut eta: Vec<f64> = counts.iter().map(|c| (c + 0.5).ln()).collect();
    let mut mu: Vec<f64> = eta.iter().map(|e| e.exp()).collect();
    let mut dev = poisson_deviance(&counts, &mu);
    let mut trace = vec![dev];
    let mut beta = vec![0.0; p];
    let mut iterations = 0;

    for _ in 0..50 {
        iterations += 1;
        let weights = mu.clone();
        let working: Vec<f64> = (0..n)
            .map(|i| eta[i] + (counts[i] - mu[i]) / mu[i])
            .collect();
        let new_beta = solve_weighted_least_squares(&design, &weights, &working)
            .ok_or_else(|| DensityError::FitFailure { trace: trace.clone() })?;
        let mut new_eta: Vec<f64> = (0..n).map(|i| dot(design.row(i), &new_beta)).collect();
        for e in new_eta.iter_mut() {
            *e = e.clamp(-30.0, 30.0);
        }
        let mut new_mu: Vec<f64> = new_eta.iter().map(|e| e.exp()).collect();
        let mut new_dev = poisson_deviance(&counts, &new_mu);
        // step halving toward the previous iterate if the step diverges
        let mut halvings = 0;
        while !new_dev.is_finite() && halvings < 8 {
            for i in 0..n {
                new_eta[i] = 0.5 * (new_eta[i] + eta[i]);
            }
            new_mu = new_eta.iter().map(|e| e.exp()).collect();
            new_dev = poisson_deviance(&counts, &new_mu);
            halvings += 1;
        }
        if !new_dev.is_finite() {
            trace.push(new_dev);
            return Err(DensityError::FitFailure { trace });
        }
        beta = new_beta;
        eta = new_eta;
        mu = new_mu;
        let change = (dev - new_dev).abs();
        dev = new_dev;
        trace.push(dev);
        if change < 1e-8 * (dev.abs() + 0.1) {
            break;
        }
    }

    let fitted_counts: Vec<f64> = (0..n).map(|i| dot(design.row(i), &beta).exp()).collect();
    let normalizer = hist.width * hist.total_count() as f64;
    Ok(DensityFit {
        basis,
        beta,
        support: boundary,
        normalizer,
        fitted_counts,
        deviance: dev,
        iterations,
    })
}

fn poisson_deviance(counts: &[f64], mu: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..counts.len() {
        let c = counts[i];
        let m = mu[i];
        if c > 0.0 {
            acc += c * (c / m).ln() - (c - m);
        } else {
            acc += m;
        }
    }
    2.0 * acc
}

/// Convenience path: bin-count selection, knot placement, Poisson fit.
pub fn estimate_density(
    sample: &Sample,
    df: usize,
    anchor: KnotAnchor,
) -> Result<DensityFit, DensityError> {
    if df < 3 {
        return Err(DensityError::InvalidInput(format!(
            "spline needs at least 3 degrees of freedom, got {df}"
        )));
    }
    let n_i = select_bin_count(sample)?;
    let hist = build_histogram(sample, n_i)?;
    let knots = place_knots(&hist, sample, df - 1, anchor)?;
    fit_poisson_spline(&hist, &knots)
}
