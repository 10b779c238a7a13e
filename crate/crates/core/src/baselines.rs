//! Reference deconvolution estimators for head-to-head benchmarking:
//! damped Fourier quotient (FDD), kernel-smoothed quotient with a hard
//! indicator cutoff (MCD), the deconvolution kernel method for known errors
//! (DKM), and replicate-difference deconvolution with a ridge-stabilized
//! denominator (RMD).
//!
//! All four share the Fourier machinery from [`crate::fourier`]: the
//! relevant quotient is tabulated on a symmetric window and inverted onto
//! the caller's `y`-grid.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distributions::{DistributionError, DistributionSpec};
use crate::fourier::{
    empirical_ft, mc_inverse, symmetric_tabulation, FourierError, FourierEstimate,
    InverseNormalization, TGrid,
};
use crate::sample::{Replicates, Sample};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("unsupported error family for this method: {0}")]
    UnsupportedErrorFamily(&'static str),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
}

/// Smoothing kernel, given by its compactly supported Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SmoothingKernel {
    /// `phi_K(u) = (1 - u^2)^3` on `[-1, 1]`.
    QuarticFt,
    /// `phi_K(u) = 1` on `[-1, 1]` (sharp truncation).
    SincTruncated,
}

impl SmoothingKernel {
    pub fn ft(&self, u: f64) -> f64 {
        if u.abs() > 1.0 {
            return 0.0;
        }
        match self {
            SmoothingKernel::QuarticFt => {
                let w = 1.0 - u * u;
                w * w * w
            }
            SmoothingKernel::SincTruncated => 1.0,
        }
    }
}

/// How FDD picks the damping half-width from the empirical transform of the
/// convolving sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DampingRule {
    /// First frequency at which the empirical modulus drops below `tau`
    /// (full grid extent if it never does).
    ModulusThreshold { tau: f64 },
    /// `M = p / sqrt(2)` with `p` the magnitude of the least-squares slope
    /// of `log |phi_X|` on `log t` over the band where the modulus lies in
    /// `[n^{-1/2}, 0.5]`.
    LogLogSlope,
}

impl Default for DampingRule {
    fn default() -> Self {
        DampingRule::ModulusThreshold { tau: 0.2 }
    }
}

/// Shared frequency-scan settings for the baseline methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineGrid {
    pub grid_len: usize,
    pub t_max: f64,
}

impl Default for BaselineGrid {
    fn default() -> Self {
        BaselineGrid {
            grid_len: 401,
            t_max: 32.0,
        }
    }
}

/// Output of any baseline method.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineResult {
    pub ygrid: Vec<f64>,
    pub density: Vec<f64>,
    /// Effective half-width of the inversion window.
    pub cutoff: f64,
    /// Bandwidth used, where the method has one.
    pub bandwidth: Option<f64>,
    /// The damping/bandwidth selection collapsed to a near-empty window.
    pub degenerate_window: bool,
    pub max_imag_residual: f64,
}

impl BaselineResult {
    pub fn density_csv(&self) -> String {
        let mut out = String::from("y,fhat\n");
        for (y, f) in self.ygrid.iter().zip(self.density.iter()) {
            out.push_str(&format!("{y},{f}\n"));
        }
        out
    }
}

fn invert_window(
    window: &TGrid,
    values: Vec<Complex64>,
    ygrid: &[f64],
    cutoff: f64,
    bandwidth: Option<f64>,
    degenerate: bool,
) -> Result<BaselineResult, BaselineError> {
    let est = FourierEstimate {
        grid: window.clone(),
        values,
    };
    let (density, max_imag) = mc_inverse(&est, ygrid, InverseNormalization::WindowCount)?;
    Ok(BaselineResult {
        ygrid: ygrid.to_vec(),
        density,
        cutoff,
        bandwidth,
        degenerate_window: degenerate,
        max_imag_residual: max_imag,
    })
}

/// Bartlett taper `max(0, 1 - |t|/m)`.
pub fn bartlett(t: f64, m: f64) -> f64 {
    (1.0 - t.abs() / m).max(0.0)
}

fn first_crossing_below(est: &FourierEstimate, level: f64) -> Option<usize> {
    let mid = est.grid.mid();
    (mid..est.grid.len()).find(|&k| est.values[k].norm() < level)
}

fn damping_cutoff(x_ft: &FourierEstimate, n_x: usize, rule: DampingRule) -> f64 {
    match rule {
        DampingRule::ModulusThreshold { tau } => match first_crossing_below(x_ft, tau) {
            Some(k) => x_ft.grid.t(k),
            None => x_ft.grid.t_max(),
        },
        DampingRule::LogLogSlope => {
            let lo = (n_x as f64).powf(-0.5);
            let mid = x_ft.grid.mid();
            let mut pts = Vec::new();
            for k in (mid + 1)..x_ft.grid.len() {
                let m = x_ft.values[k].norm();
                if m >= lo && m <= 0.5 {
                    pts.push((x_ft.grid.t(k).ln(), m.ln()));
                }
            }
            if pts.len() < 2 {
                return x_ft.grid.spacing();
            }
            let n = pts.len() as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
            let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
            if sxx == 0.0 {
                return x_ft.grid.spacing();
            }
            (sxy / sxx).abs() / std::f64::consts::SQRT_2
        }
    }
}

/// Damped Fourier quotient of two empirical transforms: Bartlett taper with
/// a data-chosen half-width, inverted over the taper's support.
pub fn fdd_deconvolve(
    x: &Sample,
    z: &Sample,
    ygrid: &[f64],
    rule: DampingRule,
    grid_cfg: BaselineGrid,
) -> Result<BaselineResult, BaselineError> {
    let scan = TGrid::new(grid_cfg.grid_len, grid_cfg.t_max)?;
    let x_ft = empirical_ft(x.values(), &scan);
    let m = damping_cutoff(&x_ft, x.len(), rule);
    let degenerate = m <= 2.0 * scan.spacing();
    let window = TGrid::new(grid_cfg.grid_len, m.max(2.0 * scan.spacing()))?;
    let values: Vec<Complex64> = window
        .points()
        .iter()
        .map(|&t| {
            let num = crate::fourier::empirical_ft_at(z.values(), t);
            let den = crate::fourier::empirical_ft_at(x.values(), t);
            bartlett(t, m) * num / den
        })
        .collect();
    invert_window(&window, values, ygrid, m, None, degenerate)
}

/// Kernel-smoothed empirical quotient with a hard indicator that zeroes
/// frequencies where the convolving transform falls below `n_x^{-1/2}`.
pub fn mcd_deconvolve(
    x: &Sample,
    z: &Sample,
    ygrid: &[f64],
    bandwidth: Option<f64>,
    kernel: SmoothingKernel,
    grid_cfg: BaselineGrid,
) -> Result<BaselineResult, BaselineError> {
    let scan = TGrid::new(grid_cfg.grid_len, grid_cfg.t_max)?;
    let h = match bandwidth {
        Some(h) => {
            if !(h > 0.0) {
                return Err(BaselineError::InvalidInput(format!(
                    "bandwidth must be positive, got {h}"
                )));
            }
            h
        }
        None => {
            let z_ft = empirical_ft(z.values(), &scan);
            let level = (z.len() as f64).powf(-0.5);
            match first_crossing_below(&z_ft, level) {
                Some(k) => 1.0 / z_ft.grid.t(k),
                None => 1.0 / scan.t_max(),
            }
        }
    };
    let support = 1.0 / h;
    let cutoff_x = (x.len() as f64).powf(-0.5);
    let window = TGrid::new(grid_cfg.grid_len, support)?;
    let values: Vec<Complex64> = window
        .points()
        .iter()
        .map(|&t| {
            let den = crate::fourier::empirical_ft_at(x.values(), t);
            if den.norm() < cutoff_x {
                return Complex64::default();
            }
            let num = crate::fourier::empirical_ft_at(z.values(), t);
            kernel.ft(t * h) * num / den
        })
        .collect();
    invert_window(&window, values, ygrid, support, Some(h), false)
}

/// Rule-of-thumb bandwidth for the deconvolution kernel method.
///
/// Normal errors: `h = sigma_x sqrt(2 / ln n)`, the rate that keeps the
/// exploding factor `exp(sigma^2 t^2 / 2 h^2)` of order `n` at the kernel
/// edge. Laplace errors: the AMISE minimizer for the quartic-FT kernel with
/// a normal-reference target roughness,
/// `h = (8.3824e-4 b^4 sigma_y^5 / n)^{1/9}`.
pub fn dkm_rule_of_thumb(error: &DistributionSpec, z: &Sample) -> Result<f64, BaselineError> {
    let n = z.len() as f64;
    match error {
        DistributionSpec::Normal { sd, .. } => Ok(sd * (2.0 / n.ln()).sqrt()),
        DistributionSpec::Laplace { scale, .. } => {
            let var_x = 2.0 * scale * scale;
            let sigma_y2 = (z.variance() - var_x).max(0.05 * z.variance());
            let b4 = scale.powi(4);
            Ok((8.3824e-4 * b4 * sigma_y2.powf(2.5) / n).powf(1.0 / 9.0))
        }
        _ => Err(BaselineError::UnsupportedErrorFamily(error.family_name())),
    }
}

/// Deconvolution kernel method for a known Normal or Laplace error law:
/// the empirical transform of the contaminated data divided by the exact
/// error transform, smoothed by the kernel, inverted over its support.
pub fn dkm_deconvolve(
    z: &Sample,
    error: &DistributionSpec,
    ygrid: &[f64],
    bandwidth: Option<f64>,
    kernel: SmoothingKernel,
    grid_cfg: BaselineGrid,
) -> Result<BaselineResult, BaselineError> {
    error.validate()?;
    if !matches!(
        error,
        DistributionSpec::Normal { .. } | DistributionSpec::Laplace { .. }
    ) {
        return Err(BaselineError::UnsupportedErrorFamily(error.family_name()));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => {
            return Err(BaselineError::InvalidInput(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => dkm_rule_of_thumb(error, z)?,
    };
    let support = 1.0 / h;
    let window = TGrid::new(grid_cfg.grid_len, support)?;
    let est = symmetric_tabulation(&window, |t| {
        let den = error.cf(t).expect("normal/laplace have closed forms");
        let num = crate::fourier::empirical_ft_at(z.values(), t);
        kernel.ft(t * h) * num / den
    });
    invert_window(&window, est.values, ygrid, support, Some(h), false)
}

/// Transform of the error law estimated from replicate differences:
/// `sqrt(|mean_j cos(t (z_j1 - z_j2))|)`, real and nonnegative.
pub fn replicate_error_ft(replicates: &Replicates, t: f64) -> f64 {
    let mut acc = 0.0;
    for (a, b) in replicates.first().iter().zip(replicates.second().iter()) {
        acc += (t * (a - b)).cos();
    }
    (acc / replicates.len() as f64).abs().sqrt()
}

/// Replicate-difference deconvolution: kernel-smoothed transform of the
/// pooled observations over the (ridge-stabilized) replicate-difference
/// error transform.
pub fn rmd_deconvolve(
    replicates: &Replicates,
    ygrid: &[f64],
    bandwidth: Option<f64>,
    ridge: f64,
    kernel: SmoothingKernel,
    grid_cfg: BaselineGrid,
) -> Result<BaselineResult, BaselineError> {
    if replicates.len() < 20 {
        return Err(BaselineError::InvalidInput(format!(
            "replicate deconvolution needs at least 20 pairs, got {}",
            replicates.len()
        )));
    }
    if ridge < 0.0 {
        return Err(BaselineError::InvalidInput(format!(
            "ridge must be nonnegative, got {ridge}"
        )));
    }
    let pooled: Vec<f64> = replicates
        .first()
        .iter()
        .chain(replicates.second().iter())
        .cloned()
        .collect();
    let scan = TGrid::new(grid_cfg.grid_len, grid_cfg.t_max)?;
    let h = match bandwidth {
        Some(h) if h > 0.0 => h,
        Some(h) => {
            return Err(BaselineError::InvalidInput(format!(
                "bandwidth must be positive, got {h}"
            )))
        }
        None => {
            let z_ft = empirical_ft(&pooled, &scan);
            let level = (pooled.len() as f64).powf(-0.5);
            match first_crossing_below(&z_ft, level) {
                Some(k) => 1.0 / z_ft.grid.t(k),
                None => 1.0 / scan.t_max(),
            }
        }
    };
    let support = 1.0 / h;
    let window = TGrid::new(grid_cfg.grid_len, support)?;
    let est = symmetric_tabulation(&window, |t| {
        let den = replicate_error_ft(replicates, t) + ridge;
        let num = crate::fourier::empirical_ft_at(&pooled, t);
        kernel.ft(t * h) * num / den
    });
    invert_window(&window, est.values, ygrid, support, Some(h), false)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BaselineMethod {
    Fdd,
    Mcd,
    Dkm,
    Rmd,
}

/// Method choice plus every tunable the four estimators accept.
#[derive(Debug, Clone, Serialize)]
pub struct BaselineConfig {
    pub method: BaselineMethod,
    pub bandwidth: Option<f64>,
    pub kernel: SmoothingKernel,
    pub damping: DampingRule,
    pub ridge: f64,
    pub error: Option<DistributionSpec>,
    pub grid: BaselineGrid,
}

impl BaselineConfig {
    pub fn new(method: BaselineMethod) -> Self {
        BaselineConfig {
            method,
            bandwidth: None,
            kernel: SmoothingKernel::QuarticFt,
            damping: DampingRule::default(),
            ridge: 0.01,
            error: None,
            grid: BaselineGrid::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gamma41() -> DistributionSpec {
        DistributionSpec::Gamma { shape: 4.0, rate: 1.0 }
    }

    fn convolved(
        fx: &DistributionSpec,
        fy: &DistributionSpec,
        n: usize,
        seed: u64,
    ) -> (Sample, Sample) {
        let x = fx.sample(n, seed).unwrap();
        let y = fy.sample(n, seed + 1_000_000).unwrap();
        let e = fx.sample(n, seed + 2_000_000).unwrap();
        let z = Sample::new(
            y.values().iter().zip(e.values()).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        (x, z)
    }

    fn ise_against(result: &BaselineResult, truth: &DistributionSpec) -> f64 {
        let h = result.ygrid[1] - result.ygrid[0];
        result
            .density
            .iter()
            .zip(result.ygrid.iter())
            .map(|(f, y)| (f - truth.pdf(*y)).powi(2) * h)
            .sum()
    }

    #[test]
    fn bartlett_shape() {
        assert_eq!(bartlett(0.0, 2.0), 1.0);
        assert_eq!(bartlett(2.0, 2.0), 0.0);
        assert_eq!(bartlett(-5.0, 2.0), 0.0);
        assert_abs_diff_eq!(bartlett(1.0, 2.0), 0.5);
    }

    #[test]
    fn kernel_fts() {
        assert_eq!(SmoothingKernel::QuarticFt.ft(0.0), 1.0);
        assert_eq!(SmoothingKernel::QuarticFt.ft(1.5), 0.0);
        assert_abs_diff_eq!(SmoothingKernel::QuarticFt.ft(0.5), 0.421875);
        assert_eq!(SmoothingKernel::SincTruncated.ft(0.7), 1.0);
        assert_eq!(SmoothingKernel::SincTruncated.ft(-1.2), 0.0);
    }

    #[test]
    fn fdd_runs_and_is_finite() {
        let fx = DistributionSpec::Exponential { rate: 0.5 };
        let (x, z) = convolved(&fx, &gamma41(), 500, 2);
        let ygrid = crate::linspace(z.min() - x.max(), z.max() - x.min(), 256);
        let res = fdd_deconvolve(&x, &z, &ygrid, DampingRule::default(), BaselineGrid::default())
            .unwrap();
        assert!(res.density.iter().all(|v| v.is_finite()));
        assert!(res.cutoff > 0.0);
        assert!(!res.degenerate_window);
    }

    #[test]
    fn fdd_with_point_mass_convolver_recovers_mixed_density() {
        // phi_X has modulus one everywhere: the quotient is phi_Z itself and
        // FDD reduces to a tapered estimate of f_Z
        let fy = gamma41();
        let z = fy.sample(1000, 9).unwrap();
        let x = Sample::new(vec![0.0; 100]).unwrap();
        let ygrid = crate::linspace(-2.0, 14.0, 320);
        let res = fdd_deconvolve(&x, &z, &ygrid, DampingRule::default(), BaselineGrid::default())
            .unwrap();
        // no crossing below tau: full-extent window
        assert_abs_diff_eq!(res.cutoff, 32.0, epsilon = 1e-12);
        let ise = ise_against(&res, &fy);
        assert!(ise < 0.05, "ISE {ise}");
    }

    #[test]
    fn mcd_with_point_mass_convolver_recovers_mixed_density() {
        let fy = gamma41();
        let z = fy.sample(1000, 10).unwrap();
        let x = Sample::new(vec![0.0; 100]).unwrap();
        let ygrid = crate::linspace(-2.0, 14.0, 320);
        let res = mcd_deconvolve(
            &x,
            &z,
            &ygrid,
            None,
            SmoothingKernel::QuarticFt,
            BaselineGrid::default(),
        )
        .unwrap();
        let ise = ise_against(&res, &fy);
        assert!(ise < 0.05, "ISE {ise}");
    }

    #[test]
    fn mcd_indicator_cutoff_level() {
        // with n_x = 100 the indicator level is 0.1: frequencies where the
        // convolving transform is weaker than that contribute nothing
        let fx = DistributionSpec::normal_var(0.0, 4.0);
        let (x, z) = convolved(&fx, &gamma41(), 100, 3);
        let ygrid = crate::linspace(z.min() - x.max(), z.max() - x.min(), 128);
        // tiny bandwidth = wide window: far frequencies all run through the
        // indicator; the result must still be finite everywhere
        let res = mcd_deconvolve(
            &x,
            &z,
            &ygrid,
            Some(0.05),
            SmoothingKernel::QuarticFt,
            BaselineGrid::default(),
        )
        .unwrap();
        assert!(res.density.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!((x.len() as f64).powf(-0.5), 0.1, epsilon = 1e-15);
    }

    #[test]
    fn mcd_oversmoothing_collapses_estimate() {
        let fx = DistributionSpec::Exponential { rate: 0.5 };
        let (x, z) = convolved(&fx, &gamma41(), 400, 6);
        let ygrid = crate::linspace(z.min() - x.max(), z.max() - x.min(), 128);
        let res = mcd_deconvolve(
            &x,
            &z,
            &ygrid,
            Some(50.0),
            SmoothingKernel::QuarticFt,
            BaselineGrid::default(),
        )
        .unwrap();
        // the window is [-0.02, 0.02]: everything flattens toward zero
        let peak = res.density.iter().cloned().fold(f64::MIN, f64::max);
        assert!(peak < 0.05, "peak {peak}");
    }

    #[test]
    fn dkm_rejects_unsupported_error_families() {
        let z = gamma41().sample(100, 1).unwrap();
        let ygrid = crate::linspace(-2.0, 10.0, 64);
        let err = DistributionSpec::Exponential { rate: 1.0 };
        assert!(matches!(
            dkm_deconvolve(
                &z,
                &err,
                &ygrid,
                None,
                SmoothingKernel::QuarticFt,
                BaselineGrid::default()
            ),
            Err(BaselineError::UnsupportedErrorFamily(_))
        ));
    }

    #[test]
    fn dkm_laplace_with_vanishing_scale_matches_plain_kernel_estimate() {
        let fy = gamma41();
        let error = DistributionSpec::Laplace { location: 0.0, scale: 1e-6 };
        let z = fy.sample(600, 12).unwrap();
        let ygrid = crate::linspace(-2.0, 14.0, 160);
        let h = 0.4;
        let res = dkm_deconvolve(
            &z,
            &error,
            &ygrid,
            Some(h),
            SmoothingKernel::QuarticFt,
            BaselineGrid::default(),
        )
        .unwrap();
        // reference: same pipeline with the error transform pinned at 1
        let window = TGrid::new(401, 1.0 / h).unwrap();
        let reference = symmetric_tabulation(&window, |t| {
            SmoothingKernel::QuarticFt.ft(t * h)
                * crate::fourier::empirical_ft_at(z.values(), t)
        });
        let (ref_density, _) =
            mc_inverse(&reference, &ygrid, InverseNormalization::WindowCount).unwrap();
        for (a, b) in res.density.iter().zip(ref_density.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn dkm_known_error_estimate_integrates_to_one_after_clipping() {
        let fy = gamma41();
        let error = DistributionSpec::normal_var(0.0, 2.0);
        let y = fy.sample(500, 31).unwrap();
        let noise = error.sample(500, 32).unwrap();
        let z = Sample::new(
            y.values().iter().zip(noise.values()).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let ygrid = crate::linspace(z.min() - 6.0, z.max() + 6.0, 400);
        let res = dkm_deconvolve(
            &z,
            &error,
            &ygrid,
            None,
            SmoothingKernel::QuarticFt,
            BaselineGrid::default(),
        )
        .unwrap();
        let h = ygrid[1] - ygrid[0];
        let integral: f64 = res.density.iter().map(|v| v.max(0.0) * h).sum();
        assert!((integral - 1.0).abs() < 0.05, "integral {integral}");
    }

    fn replicated(
        fy: &DistributionSpec,
        error: &DistributionSpec,
        n: usize,
        seed: u64,
    ) -> Replicates {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let y = fy.sample_with(&mut rng, n);
        let e1 = error.sample_with(&mut rng, n);
        let e2 = error.sample_with(&mut rng, n);
        let z1: Vec<f64> = y.iter().zip(&e1).map(|(a, b)| a + b).collect();
        let z2: Vec<f64> = y.iter().zip(&e2).map(|(a, b)| a + b).collect();
        Replicates::new(z1, z2).unwrap()
    }

    #[test]
    fn replicate_error_ft_is_real_nonnegative_and_consistent() {
        let reps = replicated(&gamma41(), &DistributionSpec::normal_var(0.0, 1.0), 2000, 5);
        for t in [0.0, 0.3, 1.0, 2.0] {
            let v = replicate_error_ft(&reps, t);
            assert!(v >= 0.0);
            // consistent with the true |phi_X| = e^{-t^2/2} at moderate t
            if t <= 1.0 {
                assert_abs_diff_eq!(v, (-0.5 * t * t).exp(), epsilon = 0.05);
            }
        }
        assert_abs_diff_eq!(replicate_error_ft(&reps, 0.0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rmd_identical_replicates_reduce_to_kernel_estimate() {
        let fy = gamma41();
        let z = fy.sample(500, 8).unwrap();
        let reps = Replicates::new(z.values().to_vec(), z.values().to_vec()).unwrap();
        let ygrid = crate::linspace(-2.0, 14.0, 160);
        let h = 0.5;
        let res = rmd_deconvolve(
            &reps,
            &ygrid,
            Some(h),
            0.0,
            SmoothingKernel::QuarticFt,
            BaselineGrid::default(),
        )
        .unwrap();
        // phi_X is exactly 1, so the estimator is the smoothed transform of
        // the pooled (duplicated) sample
        let pooled: Vec<f64> = z.values().iter().chain(z.values()).cloned().collect();
        let window = TGrid::new(401, 1.0 / h).unwrap();
        let reference = symmetric_tabulation(&window, |t| {
            SmoothingKernel::QuarticFt.ft(t * h) * crate::fourier::empirical_ft_at(&pooled, t)
        });
        let (ref_density, _) =
            mc_inverse(&reference, &ygrid, InverseNormalization::WindowCount).unwrap();
        for (a, b) in res.density.iter().zip(ref_density.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn rmd_ridge_is_gentle_when_error_ft_is_strong() {
        // small error variance keeps |phi_X| > 0.2 over the kernel support
        let reps = replicated(&gamma41(), &DistributionSpec::normal_var(0.0, 0.04), 1000, 13);
        let ygrid = crate::linspace(-2.0, 14.0, 160);
        let a = rmd_deconvolve(
            &reps,
            &ygrid,
            None,
            0.0,
            SmoothingKernel::QuarticFt,
            BaselineGrid::default(),
        )
        .unwrap();
        let b = rmd_deconvolve(
            &reps,
            &ygrid,
            None,
            0.01,
            SmoothingKernel::QuarticFt,
            BaselineGrid::default(),
        )
        .unwrap();
        let sup = a
            .density
            .iter()
            .zip(b.density.iter())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        assert!(sup < 0.05, "sup {sup}");
    }

    #[test]
    fn rmd_needs_enough_pairs_and_aligned_columns() {
        let reps = Replicates::new(vec![1.0; 5], vec![2.0; 5]).unwrap();
        let ygrid = crate::linspace(-1.0, 1.0, 64);
        assert!(matches!(
            rmd_deconvolve(
                &reps,
                &ygrid,
                None,
                0.0,
                SmoothingKernel::QuarticFt,
                BaselineGrid::default()
            ),
            Err(BaselineError::InvalidInput(_))
        ));
    }

    #[test]
    fn all_methods_return_finite_vectors() {
        let fx = DistributionSpec::normal_var(0.0, 1.0);
        let fy = gamma41();
        let (x, z) = convolved(&fx, &fy, 300, 77);
        let ygrid = crate::linspace(z.min() - x.max(), z.max() - x.min(), 200);
        let grid = BaselineGrid::default();
        let fdd = fdd_deconvolve(&x, &z, &ygrid, DampingRule::default(), grid).unwrap();
        let mcd = mcd_deconvolve(&x, &z, &ygrid, None, SmoothingKernel::QuarticFt, grid).unwrap();
        let dkm = dkm_deconvolve(&z, &fx, &ygrid, None, SmoothingKernel::QuarticFt, grid).unwrap();
        let reps = replicated(&fy, &fx, 300, 78);
        let rmd =
            rmd_deconvolve(&reps, &ygrid, None, 0.01, SmoothingKernel::QuarticFt, grid).unwrap();
        for res in [&fdd, &mcd, &dkm, &rmd] {
            assert!(res.density.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn loglog_slope_rule_is_available() {
        let fx = DistributionSpec::Exponential { rate: 0.5 };
        let (x, z) = convolved(&fx, &gamma41(), 500, 15);
        let ygrid = crate::linspace(z.min() - x.max(), z.max() - x.min(), 128);
        let res = fdd_deconvolve(&x, &z, &ygrid, DampingRule::LogLogSlope, BaselineGrid::default())
            .unwrap();
        assert!(res.density.iter().all(|v| v.is_finite()));
        // for an exponential convolver the log-log slope sits near 1, so the
        // cutoff lands near 1/sqrt(2)
        assert!(res.cutoff > 0.3 && res.cutoff < 1.5, "cutoff {}", res.cutoff);
    }
}
