//! Built-in benchmark scenarios: each names a target density, a convolving
//! density (or replicate design), sample sizes, the methods to compare, and
//! the estimator settings the comparison uses.

use deconvkit_core::density::KnotAnchor;
use deconvkit_core::distributions::MixtureComponent;
use deconvkit_core::npfd::NpfdConfig;
use deconvkit_core::DistributionSpec;
use serde::{Deserialize, Serialize};

/// Heteroscedastic error layout: per-observation normal variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum VarianceProfile {
    /// First half of the observations at `low`, second half at `high`.
    TwoPoint { low: f64, high: f64 },
    /// `sigma_i^2 = base + span * i / n` for `i = 1..n`.
    Ramp { base: f64, span: f64 },
}

impl VarianceProfile {
    pub fn variances(&self, n: usize) -> Vec<f64> {
        match self {
            VarianceProfile::TwoPoint { low, high } => (0..n)
                .map(|i| if i < n / 2 { *low } else { *high })
                .collect(),
            VarianceProfile::Ramp { base, span } => (1..=n)
                .map(|i| base + span * i as f64 / n as f64)
                .collect(),
        }
    }

    pub fn mean_variance(&self, n: usize) -> f64 {
        let v = self.variances(n);
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// What data each replicate generates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DataDesign {
    /// Independent samples from the convolving and the mixed distribution.
    ConvolvingSample { n_x: usize, n_z: usize },
    /// Paired draws; the estimators see `z` and the exact error law.
    KnownError { n: usize },
    /// Two replicate measurements per latent value; optional per-index
    /// variance profile for heteroscedastic normal errors.
    Replicates {
        n: usize,
        #[serde(default)]
        profile: Option<VarianceProfile>,
    },
}

impl DataDesign {
    pub fn mixed_size(&self) -> usize {
        match self {
            DataDesign::ConvolvingSample { n_z, .. } => *n_z,
            DataDesign::KnownError { n } | DataDesign::Replicates { n, .. } => *n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMethod {
    Npfd,
    Fdd,
    Mcd,
    Dkm,
    Rmd,
}

impl BenchMethod {
    pub fn name(&self) -> &'static str {
        match self {
            BenchMethod::Npfd => "npfd",
            BenchMethod::Fdd => "fdd",
            BenchMethod::Mcd => "mcd",
            BenchMethod::Dkm => "dkm",
            BenchMethod::Rmd => "rmd",
        }
    }
}

/// A named simulation scenario.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: String,
    pub description: String,
    /// Target density `f_Y` (the ISE ground truth).
    pub target: DistributionSpec,
    /// Convolving density `f_X`; for heteroscedastic replicate designs this
    /// is the mean-variance reference law, sampling uses the profile.
    pub convolving: DistributionSpec,
    pub design: DataDesign,
    pub methods: Vec<BenchMethod>,
    #[serde(default)]
    pub npfd: NpfdConfig,
    #[serde(default = "default_base_seed")]
    pub base_seed: u64,
}

fn default_base_seed() -> u64 {
    0x5eed_2024
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), String> {
        self.target.validate().map_err(|e| e.to_string())?;
        self.convolving.validate().map_err(|e| e.to_string())?;
        let ok_sizes = match &self.design {
            DataDesign::ConvolvingSample { n_x, n_z } => *n_x >= 10 && *n_z >= 10,
            DataDesign::KnownError { n } => *n >= 10,
            DataDesign::Replicates { n, .. } => *n >= 20,
        };
        if !ok_sizes {
            return Err(format!("scenario {}: sample sizes too small", self.id));
        }
        if self.methods.is_empty() {
            return Err(format!("scenario {}: no methods configured", self.id));
        }
        Ok(())
    }
}

fn gamma(shape: f64, rate: f64) -> DistributionSpec {
    DistributionSpec::Gamma { shape, rate }
}

fn exponential(rate: f64) -> DistributionSpec {
    DistributionSpec::Exponential { rate }
}

fn normal_var(mean: f64, variance: f64) -> DistributionSpec {
    DistributionSpec::normal_var(mean, variance)
}

fn kfold(k: u32) -> DistributionSpec {
    DistributionSpec::LaplaceKFold { k }
}

fn chi_scaled() -> DistributionSpec {
    DistributionSpec::ScaledChiSquare {
        df: 3.0,
        divisor: 6.0_f64.sqrt(),
    }
}

fn chi_gamma_convolution() -> DistributionSpec {
    DistributionSpec::convolution(
        DistributionSpec::ChiSquare { df: 3.0 },
        gamma(2.25, 0.75),
    )
}

fn npfd_defaults() -> NpfdConfig {
    NpfdConfig {
        anchor: KnotAnchor::Mode,
        ..NpfdConfig::default()
    }
}

/// Empirical-transform settings used by the measurement-error comparisons.
fn npfd_empirical() -> NpfdConfig {
    NpfdConfig {
        use_empirical_ft: true,
        ..npfd_defaults()
    }
}

struct Builder {
    out: Vec<ScenarioSpec>,
}

impl Builder {
    fn push(
        &mut self,
        id: &str,
        description: &str,
        target: DistributionSpec,
        convolving: DistributionSpec,
        design: DataDesign,
        methods: Vec<BenchMethod>,
        npfd: NpfdConfig,
    ) {
        self.out.push(ScenarioSpec {
            id: id.to_string(),
            description: description.to_string(),
            target,
            convolving,
            design,
            methods,
            npfd,
            base_seed: default_base_seed(),
        });
    }
}

/// Every built-in scenario.
///
/// Naming: `fdd-1..8` run the two-sample comparisons at `n = 500` with
/// `fdd-k-small` variants at `n = 100`; `mcd-1..5` use the small sizes
/// `(n_x, n_z) = (10, 200)` with `mcd-k-large` at `(500, 1000)`;
/// `dkm-1..4` are the known-error comparisons; `rmd-1..4` the replicate
/// comparisons; `het-1..6` the heteroscedastic replicate settings.
pub fn builtin_scenarios() -> Vec<ScenarioSpec> {
    let mut b = Builder { out: Vec::new() };

    // two-sample comparisons against the damped-quotient estimator
    let fdd_cases: [(&str, DistributionSpec, DistributionSpec); 8] = [
        ("fdd-1", gamma(4.0, 1.0), exponential(0.5)),
        ("fdd-2", gamma(4.0, 1.0), exponential(0.25)),
        ("fdd-3", gamma(4.0, 1.0), gamma(4.0, 2.0)),
        ("fdd-4", gamma(4.0, 1.0), gamma(4.0, 1.0)),
        (
            "fdd-5",
            DistributionSpec::ChiSquare { df: 3.0 },
            DistributionSpec::Weibull { shape: 4.0, scale: 12.44 },
        ),
        (
            "fdd-6",
            DistributionSpec::ChiSquare { df: 8.0 },
            DistributionSpec::Weibull { shape: 4.0, scale: 12.44 },
        ),
        (
            "fdd-7",
            DistributionSpec::Gumbel {
                location: -12.0,
                scale: 6.0_f64.sqrt() / std::f64::consts::PI,
            },
            normal_var(9.0, 1.0),
        ),
        (
            "fdd-8",
            DistributionSpec::Gumbel {
                location: -12.0,
                scale: 6.0_f64.sqrt() / std::f64::consts::PI,
            },
            normal_var(9.0, 2.0),
        ),
    ];
    for (id, target, convolving) in fdd_cases {
        // the first two share a narrower spline for the convolving side
        let mut cfg = npfd_defaults();
        if id == "fdd-1" || id == "fdd-2" {
            cfg.df_x = Some(3);
        }
        for (suffix, n) in [("", 500usize), ("-small", 100)] {
            b.push(
                &format!("{id}{suffix}"),
                "two-sample deconvolution, damped-quotient comparison",
                target.clone(),
                convolving.clone(),
                DataDesign::ConvolvingSample { n_x: n, n_z: n },
                vec![BenchMethod::Npfd, BenchMethod::Fdd],
                cfg.clone(),
            );
        }
    }

    // convolved-Laplace comparisons against the indicator-cutoff estimator;
    // the mixed law is always the six-fold convolution
    for i in 1u32..=5 {
        let target = kfold(6 - i);
        let convolving = kfold(i);
        for (suffix, n_x, n_z) in [("", 10usize, 200usize), ("-large", 500, 1000)] {
            b.push(
                &format!("mcd-{i}{suffix}"),
                "second-experiment deconvolution, indicator-cutoff comparison",
                target.clone(),
                convolving.clone(),
                DataDesign::ConvolvingSample { n_x, n_z },
                vec![BenchMethod::Npfd, BenchMethod::Mcd],
                npfd_defaults(),
            );
        }
    }

    // known-error comparisons against the deconvolution kernel method
    b.push(
        "dkm-1",
        "known Laplace error",
        normal_var(0.0, 1.0),
        DistributionSpec::Laplace { location: 0.0, scale: 0.5 },
        DataDesign::KnownError { n: 500 },
        vec![BenchMethod::Npfd, BenchMethod::Dkm],
        npfd_defaults(),
    );
    b.push(
        "dkm-2",
        "bimodal target, known normal error; the target is not stable under
         self-convolution, so the power is pinned at one",
        DistributionSpec::Mixture {
            components: vec![
                MixtureComponent { weight: 0.5, spec: normal_var(-3.0, 1.0) },
                MixtureComponent { weight: 0.5, spec: normal_var(3.0, 1.0) },
            ],
        },
        normal_var(0.0, 0.64),
        DataDesign::KnownError { n: 1000 },
        vec![BenchMethod::Npfd, BenchMethod::Dkm],
        NpfdConfig {
            n_max: 1,
            epsilon: Some(0.03),
            // the four-knot spline cannot represent this bimodal shape, so
            // the transform comes straight from the data
            use_empirical_ft: true,
            ..npfd_defaults()
        },
    );
    b.push(
        "dkm-3",
        "skewed convolution target, known normal error",
        chi_gamma_convolution(),
        normal_var(0.0, 2.0),
        DataDesign::KnownError { n: 500 },
        vec![BenchMethod::Npfd, BenchMethod::Dkm],
        npfd_defaults(),
    );
    b.push(
        "dkm-4",
        "skewed convolution target, high-variance known normal error",
        chi_gamma_convolution(),
        normal_var(0.0, 10.0),
        DataDesign::KnownError { n: 500 },
        vec![BenchMethod::Npfd, BenchMethod::Dkm],
        npfd_defaults(),
    );

    // replicate comparisons against the replicate-difference estimator;
    // negatives are clipped, matching how those results are reported
    let rmd_clip = |epsilon: Option<f64>| NpfdConfig {
        clip_negative: true,
        epsilon,
        ..npfd_empirical()
    };
    b.push(
        "rmd-1",
        "scaled chi-square target, small normal error",
        chi_scaled(),
        normal_var(0.0, 0.2),
        DataDesign::Replicates { n: 500, profile: None },
        vec![BenchMethod::Npfd, BenchMethod::Rmd],
        rmd_clip(Some(0.1)),
    );
    b.push(
        "rmd-2",
        "scaled chi-square target, unit normal error",
        chi_scaled(),
        normal_var(0.0, 1.0),
        DataDesign::Replicates { n: 500, profile: None },
        vec![BenchMethod::Npfd, BenchMethod::Rmd],
        rmd_clip(Some(0.1)),
    );
    b.push(
        "rmd-3",
        "smooth gamma target, normal error",
        gamma(12.0, 3.0_f64.sqrt()),
        normal_var(0.0, 4.0),
        DataDesign::Replicates { n: 500, profile: None },
        vec![BenchMethod::Npfd, BenchMethod::Rmd],
        rmd_clip(None),
    );
    b.push(
        "rmd-4",
        "target with a symmetric normal factor, unit normal error",
        DistributionSpec::convolution(
            DistributionSpec::ChiSquare { df: 1.5 },
            normal_var(0.0, 1.0),
        ),
        normal_var(0.0, 1.0),
        DataDesign::Replicates { n: 500, profile: None },
        vec![BenchMethod::Npfd, BenchMethod::Rmd],
        rmd_clip(None),
    );

    // heteroscedastic replicate settings (normal errors, varying variances)
    let het_profiles: [(&str, VarianceProfile); 6] = [
        ("het-1", VarianceProfile::TwoPoint { low: 0.025, high: 0.975 }),
        ("het-2", VarianceProfile::Ramp { base: 0.25, span: 0.5 }),
        ("het-3", VarianceProfile::Ramp { base: 0.025, span: 0.95 }),
        ("het-4", VarianceProfile::TwoPoint { low: 0.05, high: 1.95 }),
        ("het-5", VarianceProfile::Ramp { base: 0.5, span: 1.0 }),
        ("het-6", VarianceProfile::Ramp { base: 0.05, span: 1.9 }),
    ];
    for (id, profile) in het_profiles {
        let n = 500;
        let reference = normal_var(0.0, profile.mean_variance(n));
        b.push(
            id,
            "heteroscedastic replicate errors",
            chi_scaled(),
            reference,
            DataDesign::Replicates { n, profile: Some(profile) },
            vec![BenchMethod::Npfd],
            NpfdConfig {
                clip_negative: true,
                ..npfd_empirical()
            },
        );
    }

    b.out
}

pub fn find_scenario(id: &str) -> Option<ScenarioSpec> {
    builtin_scenarios().into_iter().find(|s| s.id == id)
}
