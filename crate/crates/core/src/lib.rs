//! Nonparametric density deconvolution toolkit.
//!
//! Given samples from a mixed distribution `Z` and from a convolving
//! distribution `X` (or a known error law, or replicated measurements),
//! the estimators in this crate recover the density of the latent signal
//! `Y` with `f_Z = f_X * f_Y`.
//!
//! The main entry points are in [`npfd`], which implements the n-power
//! Fourier quotient estimator: both samples are rescaled and shifted,
//! their Fourier transforms are estimated, and the quotient raised to a
//! data-chosen integer power before inversion. Supporting machinery lives
//! in [`distributions`] (sampling, densities, characteristic functions),
//! [`density`] (histogram + Poisson-spline density estimation), and
//! [`fourier`] (grid transforms and inversion). [`baselines`] contains
//! reference implementations of four established deconvolution methods
//! for benchmarking.

pub mod baselines;
pub mod density;
pub mod distributions;
pub mod fourier;
pub mod linalg;
pub mod npfd;
pub mod quad;
pub mod sample;
pub mod special;

pub use distributions::DistributionSpec;
pub use sample::{Replicates, Sample};

/// Evenly spaced grid of `n` points from `a` to `b` inclusive.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (b - a) / (n - 1) as f64;
    (0..n).map(|i| a + step * i as f64).collect()
}
