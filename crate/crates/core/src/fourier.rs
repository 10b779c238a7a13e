//! Grid-based Fourier transforms of densities and samples, and the matching
//! inversion back onto a point grid.
//!
//! All transforms live on a symmetric, odd-length, equidistant `t`-grid with
//! an exact zero at the center. Values at negative frequencies are the
//! conjugates of the positive side (the data are real), which the
//! constructors enforce exactly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FourierError {
    #[error("grid length must be odd and at least 3, got {0}")]
    BadGridLength(usize),
    #[error("grid extent must be positive, got {0}")]
    BadExtent(f64),
    #[error("restriction window is empty")]
    EmptyWindow,
    #[error("estimate grids do not match")]
    GridMismatch,
}

/// Symmetric equidistant frequency grid with an odd number of points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TGrid {
    len: usize,
    t_max: f64,
}

impl TGrid {
    pub fn new(len: usize, t_max: f64) -> Result<Self, FourierError> {
        if len < 3 || len % 2 == 0 {
            return Err(FourierError::BadGridLength(len));
        }
        if !(t_max > 0.0) || !t_max.is_finite() {
            return Err(FourierError::BadExtent(t_max));
        }
        Ok(TGrid { len, t_max })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Index of the exact zero frequency.
    pub fn mid(&self) -> usize {
        self.len / 2
    }

    pub fn spacing(&self) -> f64 {
        self.t_max / self.mid() as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        let mid = self.mid() as i64;
        (i as i64 - mid) as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.t(i)).collect()
    }
}

/// A complex-valued function tabulated on a [`TGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct FourierEstimate {
    pub grid: TGrid,
    pub values: Vec<Complex64>,
}

impl FourierEstimate {
    pub fn value_at_zero(&self) -> Complex64 {
        self.values[self.grid.mid()]
    }

    /// Largest deviation from conjugate symmetry across mirrored pairs.
    pub fn conjugate_symmetry_residual(&self) -> f64 {
        let mid = self.grid.mid();
        let mut worst: f64 = self.values[mid].im.abs();
        for k in 1..=mid {
            let d = self.values[mid + k] - self.values[mid - k].conj();
            worst = worst.max(d.norm());
        }
        worst
    }

    /// Divide all values by the value at `t = 0`; returns the prior value.
    pub fn rescale_at_zero(&mut self) -> Complex64 {
        let z = self.value_at_zero();
        for v in self.values.iter_mut() {
            *v /= z;
        }
        z
    }

    /// CSV rows `(t, re, im)` for plotting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re,im\n");
        for (i, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", self.grid.t(i), v.re, v.im));
        }
        out
    }
}

/// Build the conjugate-symmetric tabulation of `f` by evaluating the upper
/// half of the grid and mirroring; `f(0)` must be (numerically) real.
pub(crate) fn symmetric_tabulation(grid: &TGrid, f: impl Fn(f64) -> Complex64) -> FourierEstimate {
    let mid = grid.mid();
    let mut values = vec![Complex64::default(); grid.len()];
    for k in mid..grid.len() {
        values[k] = f(grid.t(k));
    }
    for k in 0..mid {
        values[k] = values[2 * mid - k].conj();
    }
    FourierEstimate {
        grid: grid.clone(),
        values,
    }
}

/// Transform of a density tabulated by Monte Carlo (equidistant) integration:
/// `phi(t) = (v - u)/ell * sum_j f(s_j) e^{i s_j t}` over `ell` equidistant
/// points covering `[u, v]` inclusive.
pub fn mc_fourier(
    density: impl Fn(f64) -> f64,
    interval: (f64, f64),
    ell: usize,
    grid: &TGrid,
) -> FourierEstimate {
    let (u, v) = interval;
    assert!(ell >= 10, "need at least 10 integration points");
    assert!(v > u, "integration interval must have positive length");
    let nodes = crate::linspace(u, v, ell);
    let weights: Vec<f64> = nodes.iter().map(|&s| density(s)).collect();
    let w = (v - u) / ell as f64;
    symmetric_tabulation(grid, |t| {
        let mut acc = Complex64::default();
        for (s, fv) in nodes.iter().zip(weights.iter()) {
            let (sin, cos) = (s * t).sin_cos();
            acc += fv * Complex64::new(cos, sin);
        }
        acc * w
    })
}

/// Single off-grid evaluation of the same Monte Carlo transform.
pub fn mc_fourier_at(
    density: impl Fn(f64) -> f64,
    interval: (f64, f64),
    ell: usize,
    t: f64,
) -> Complex64 {
    let (u, v) = interval;
    let nodes = crate::linspace(u, v, ell);
    let mut acc = Complex64::default();
    for s in nodes {
        let (sin, cos) = (s * t).sin_cos();
        acc += density(s) * Complex64::new(cos, sin);
    }
    acc * ((v - u) / ell as f64)
}

/// Empirical Fourier transform `(1/n) sum_j e^{i t z_j}`.
pub fn empirical_ft(sample: &[f64], grid: &TGrid) -> FourierEstimate {
    assert!(!sample.is_empty());
    symmetric_tabulation(grid, |t| empirical_ft_at(sample, t))
}

/// Empirical Fourier transform at a single frequency.
pub fn empirical_ft_at(sample: &[f64], t: f64) -> Complex64 {
    let mut acc = Complex64::default();
    for &z in sample {
        let (sin, cos) = (t * z).sin_cos();
        acc += Complex64::new(cos, sin);
    }
    acc / sample.len() as f64
}

/// Normalization of the inverse transform.
///
/// `WindowCount` uses `gamma / (pi (K + 2))` with `K` the number of grid
/// points carrying the restricted transform; `RiemannSum` uses the plain
/// grid-spacing rule `spacing / (2 pi)`. The two agree to O(1/K) when the
/// window spans the whole grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InverseNormalization {
    WindowCount,
    RiemannSum,
}

/// Inverse transform of a (restricted) Fourier estimate onto `ygrid`:
/// `f(y) = c * sum_k value(t_k) e^{-i t_k y}`, real part taken.
///
/// Returns the density values and the largest imaginary residual observed.
pub fn mc_inverse(
    estimate: &FourierEstimate,
    ygrid: &[f64],
    normalization: InverseNormalization,
) -> Result<(Vec<f64>, f64), FourierError> {
    if estimate.values.is_empty() {
        return Err(FourierError::EmptyWindow);
    }
    let gamma = estimate.grid.t_max();
    let k = estimate.grid.len();
    let prefactor = match normalization {
        InverseNormalization::WindowCount => gamma / (std::f64::consts::PI * (k as f64 + 2.0)),
        InverseNormalization::RiemannSum => estimate.grid.spacing() / (2.0 * std::f64::consts::PI),
    };
    let points = estimate.grid.points();
    let mut out = Vec::with_capacity(ygrid.len());
    let mut max_imag: f64 = 0.0;
    for &y in ygrid {
        let mut acc = Complex64::default();
        for (tk, v) in points.iter().zip(estimate.values.iter()) {
            let (sin, cos) = (tk * y).sin_cos();
            acc += v * Complex64::new(cos, -sin);
        }
        acc *= prefactor;
        max_imag = max_imag.max(acc.im.abs());
        out.push(acc.re);
    }
    Ok((out, max_imag))
}

/// Restrict an estimate to the symmetric window `[-gamma, gamma]` given by
/// `r` grid steps each side of zero.
pub fn restrict_window(estimate: &FourierEstimate, r: usize) -> Result<FourierEstimate, FourierError> {
    let mid = estimate.grid.mid();
    if r == 0 || r > mid {
        return Err(FourierError::EmptyWindow);
    }
    let gamma = estimate.grid.spacing() * r as f64;
    let grid = TGrid::new(2 * r + 1, gamma)?;
    let values = estimate.values[mid - r..=mid + r].to_vec();
    Ok(FourierEstimate { grid, values })
}
