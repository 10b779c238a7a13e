//! Distribution families used by the deconvolution scenarios: sampling,
//! density evaluation, and closed-form characteristic functions.
//!
//! `Normal` is parameterized by standard deviation, `Laplace` by scale,
//! `Exponential` and `Gamma` by rate, `Weibull` by (shape, scale) and
//! `Gumbel` by (location, scale). `LaplaceKFold { k }` is the k-fold sum of
//! independent standard Laplace variables; `ScaledChiSquare { df, divisor }`
//! is a chi-square variable divided by a constant. `Convolution` holds
//! exactly two components and models their independent sum.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution as RandDistribution;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quad::adaptive_simpson_split;
use crate::sample::Sample;
use crate::special::{gamma as gamma_fn, ln_gamma};

const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistributionError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no closed-form characteristic function for family {0}")]
    UnsupportedFamily(&'static str),
    #[error("sample size must be at least 1")]
    EmptySample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub spec: DistributionSpec,
}

/// A parametric distribution, possibly composed from mixtures and
/// two-component convolutions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum DistributionSpec {
    Normal { mean: f64, sd: f64 },
    Laplace { location: f64, scale: f64 },
    Exponential { rate: f64 },
    Gamma { shape: f64, rate: f64 },
    Weibull { shape: f64, scale: f64 },
    Gumbel { location: f64, scale: f64 },
    ChiSquare { df: f64 },
    ScaledChiSquare { df: f64, divisor: f64 },
    LaplaceKFold { k: u32 },
    Mixture { components: Vec<MixtureComponent> },
    Convolution { components: Box<[DistributionSpec; 2]> },
}

impl DistributionSpec {
    /// Normal distribution given mean and variance (the scenario tables
    /// quote variances).
    pub fn normal_var(mean: f64, variance: f64) -> Self {
        DistributionSpec::Normal {
            mean,
            sd: variance.sqrt(),
        }
    }

    pub fn convolution(a: DistributionSpec, b: DistributionSpec) -> Self {
        DistributionSpec::Convolution {
            components: Box::new([a, b]),
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            DistributionSpec::Normal { .. } => "normal",
            DistributionSpec::Laplace { .. } => "laplace",
            DistributionSpec::Exponential { .. } => "exponential",
            DistributionSpec::Gamma { .. } => "gamma",
            DistributionSpec::Weibull { .. } => "weibull",
            DistributionSpec::Gumbel { .. } => "gumbel",
            DistributionSpec::ChiSquare { .. } => "chi_square",
            DistributionSpec::ScaledChiSquare { .. } => "scaled_chi_square",
            DistributionSpec::LaplaceKFold { .. } => "laplace_k_fold",
            DistributionSpec::Mixture { .. } => "mixture",
            DistributionSpec::Convolution { .. } => "convolution",
        }
    }

    pub fn validate(&self) -> Result<(), DistributionError> {
        let positive = |v: f64, what: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(DistributionError::InvalidParameter(format!(
                    "{what} must be strictly positive and finite, got {v}"
                )))
            }
        };
        match self {
            DistributionSpec::Normal { mean, sd } => {
                if !mean.is_finite() {
                    return Err(DistributionError::InvalidParameter("mean must be finite".into()));
                }
                positive(*sd, "sd")
            }
            DistributionSpec::Laplace { location, scale } | DistributionSpec::Gumbel { location, scale } => {
                if !location.is_finite() {
                    return Err(DistributionError::InvalidParameter("location must be finite".into()));
                }
                positive(*scale, "scale")
            }
            DistributionSpec::Exponential { rate } => positive(*rate, "rate"),
            DistributionSpec::Gamma { shape, rate } => {
                positive(*shape, "shape")?;
                positive(*rate, "rate")
            }
            DistributionSpec::Weibull { shape, scale } => {
                positive(*shape, "shape")?;
                positive(*scale, "scale")
            }
            DistributionSpec::ChiSquare { df } => positive(*df, "df"),
            DistributionSpec::ScaledChiSquare { df, divisor } => {
                positive(*df, "df")?;
                positive(*divisor, "divisor")
            }
            DistributionSpec::LaplaceKFold { k } => {
                if *k >= 1 {
                    Ok(())
                } else {
                    Err(DistributionError::InvalidParameter("fold count k must be >= 1".into()))
                }
            }
            DistributionSpec::Mixture { components } => {
                if components.is_empty() {
                    return Err(DistributionError::InvalidParameter("mixture needs components".into()));
                }
                let mut total = 0.0;
                for c in components {
                    if c.weight < 0.0 || !c.weight.is_finite() {
                        return Err(DistributionError::InvalidParameter(
                            "mixture weights must be nonnegative".into(),
                        ));
                    }
                    total += c.weight;
                    c.spec.validate()?;
                }
                if (total - 1.0).abs() > 1e-12 {
                    return Err(DistributionError::InvalidParameter(format!(
                        "mixture weights must sum to 1, got {total}"
                    )));
                }
                Ok(())
            }
            DistributionSpec::Convolution { components } => {
                components[0].validate()?;
                components[1].validate()
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            DistributionSpec::Normal { mean, .. } => *mean,
            DistributionSpec::Laplace { location, .. } => *location,
            DistributionSpec::Exponential { rate } => 1.0 / rate,
            DistributionSpec::Gamma { shape, rate } => shape / rate,
            DistributionSpec::Weibull { shape, scale } => scale * gamma_fn(1.0 + 1.0 / shape),
            DistributionSpec::Gumbel { location, scale } => location + scale * EULER_MASCHERONI,
            DistributionSpec::ChiSquare { df } => *df,
            DistributionSpec::ScaledChiSquare { df, divisor } => df / divisor,
            DistributionSpec::LaplaceKFold { .. } => 0.0,
            DistributionSpec::Mixture { components } => {
                components.iter().map(|c| c.weight * c.spec.mean()).sum()
            }
            DistributionSpec::Convolution { components } => components[0].mean() + components[1].mean(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            DistributionSpec::Normal { sd, .. } => sd * sd,
            DistributionSpec::Laplace { scale, .. } => 2.0 * scale * scale,
            DistributionSpec::Exponential { rate } => 1.0 / (rate * rate),
            DistributionSpec::Gamma { shape, rate } => shape / (rate * rate),
            DistributionSpec::Weibull { shape, scale } => {
                let g1 = gamma_fn(1.0 + 1.0 / shape);
                let g2 = gamma_fn(1.0 + 2.0 / shape);
                scale * scale * (g2 - g1 * g1)
            }
            DistributionSpec::Gumbel { scale, .. } => {
                scale * scale * std::f64::consts::PI.powi(2) / 6.0
            }
            DistributionSpec::ChiSquare { df } => 2.0 * df,
            DistributionSpec::ScaledChiSquare { df, divisor } => 2.0 * df / (divisor * divisor),
            DistributionSpec::LaplaceKFold { k } => 2.0 * *k as f64,
            DistributionSpec::Mixture { components } => {
                let m = self.mean();
                components
                    .iter()
                    .map(|c| {
                        let cm = c.spec.mean();
                        c.weight * (c.spec.variance() + cm * cm)
                    })
                    .sum::<f64>()
                    - m * m
            }
            DistributionSpec::Convolution { components } => {
                components[0].variance() + components[1].variance()
            }
        }
    }

    /// Characteristic function `E e^{itX}` where a closed form exists.
    pub fn cf(&self, t: f64) -> Result<Complex64, DistributionError> {
        let i = Complex64::new(0.0, 1.0);
        match self {
            DistributionSpec::Normal { mean, sd } => {
                Ok((i * (mean * t) - Complex64::new(0.5 * sd * sd * t * t, 0.0)).exp())
            }
            DistributionSpec::Laplace { location, scale } => {
                Ok((i * (location * t)).exp() / (1.0 + scale * scale * t * t))
            }
            DistributionSpec::Exponential { rate } => {
                Ok(Complex64::new(1.0, 0.0) / (Complex64::new(1.0, -t / rate)))
            }
            DistributionSpec::Gamma { shape, rate } => {
                Ok(complex_pow(Complex64::new(1.0, -t / rate), -shape))
            }
            DistributionSpec::ChiSquare { df } => {
                Ok(complex_pow(Complex64::new(1.0, -2.0 * t), -df / 2.0))
            }
            DistributionSpec::ScaledChiSquare { df, divisor } => {
                Ok(complex_pow(Complex64::new(1.0, -2.0 * t / divisor), -df / 2.0))
            }
            DistributionSpec::LaplaceKFold { k } => {
                Ok(Complex64::new((1.0 + t * t).powi(-(*k as i32)), 0.0))
            }
            DistributionSpec::Mixture { components } => {
                let mut acc = Complex64::new(0.0, 0.0);
                for c in components {
                    acc += c.weight * c.spec.cf(t)?;
                }
                Ok(acc)
            }
            DistributionSpec::Convolution { components } => {
                Ok(components[0].cf(t)? * components[1].cf(t)?)
            }
            DistributionSpec::Weibull { .. } => Err(DistributionError::UnsupportedFamily("weibull")),
            DistributionSpec::Gumbel { .. } => Err(DistributionError::UnsupportedFamily("gumbel")),
        }
    }

    /// Probability density at `y`.
    ///
    /// Closed forms everywhere except `Convolution`, which is evaluated by
    /// numerical convolution of its component densities. Points where a
    /// gamma-type density diverges (shape < 1 at the origin) return 0; the
    /// singularity carries no mass.
    pub fn pdf(&self, y: f64) -> f64 {
        match self {
            DistributionSpec::Normal { mean, sd } => {
                let z = (y - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            DistributionSpec::Laplace { location, scale } => {
                (-(y - location).abs() / scale).exp() / (2.0 * scale)
            }
            DistributionSpec::Exponential { rate } => {
                if y < 0.0 {
                    0.0
                } else {
                    rate * (-rate * y).exp()
                }
            }
            DistributionSpec::Gamma { shape, rate } => gamma_pdf(*shape, *rate, y),
            DistributionSpec::Weibull { shape, scale } => {
                if y < 0.0 {
                    return 0.0;
                }
                if y == 0.0 {
                    return if *shape > 1.0 {
                        0.0
                    } else if *shape == 1.0 {
                        1.0 / scale
                    } else {
                        0.0
                    };
                }
                let z = y / scale;
                (shape / scale) * z.powf(shape - 1.0) * (-z.powf(*shape)).exp()
            }
            DistributionSpec::Gumbel { location, scale } => {
                let z = (y - location) / scale;
                ((-(z + (-z).exp())).exp()) / scale
            }
            DistributionSpec::ChiSquare { df } => gamma_pdf(df / 2.0, 0.5, y),
            DistributionSpec::ScaledChiSquare { df, divisor } => gamma_pdf(df / 2.0, divisor / 2.0, y),
            DistributionSpec::LaplaceKFold { k } => laplace_kfold_pdf(*k, y),
            DistributionSpec::Mixture { components } => {
                components.iter().map(|c| c.weight * c.spec.pdf(y)).sum()
            }
            DistributionSpec::Convolution { components } => {
                convolution_pdf(&components[0], &components[1], y)
            }
        }
    }

    /// Draw `n` i.i.d. values; deterministic for fixed `(self, n, seed)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Sample, DistributionError> {
        self.validate()?;
        if n == 0 {
            return Err(DistributionError::EmptySample);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Sample::new(self.sample_with(&mut rng, n)).expect("draws are finite"))
    }

    /// Draw `n` values from an existing RNG stream (spec must be valid).
    pub fn sample_with<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        let sampler = PreparedSampler::new(self);
        (0..n).map(|_| sampler.draw(rng)).collect()
    }

    /// One draw from an existing RNG stream (spec must be valid).
    pub fn draw_with<R: Rng>(&self, rng: &mut R) -> f64 {
        PreparedSampler::new(self).draw(rng)
    }

    /// Interprets gamma-type families (support on `(0, inf)`) as
    /// `(shape, rate)`.
    fn gamma_like(&self) -> Option<(f64, f64)> {
        match self {
            DistributionSpec::Exponential { rate } => Some((1.0, *rate)),
            DistributionSpec::Gamma { shape, rate } => Some((*shape, *rate)),
            DistributionSpec::ChiSquare { df } => Some((df / 2.0, 0.5)),
            DistributionSpec::ScaledChiSquare { df, divisor } => Some((df / 2.0, divisor / 2.0)),
            _ => None,
        }
    }

    fn support(&self) -> (f64, f64) {
        match self {
            DistributionSpec::Exponential { .. }
            | DistributionSpec::Gamma { .. }
            | DistributionSpec::ChiSquare { .. }
            | DistributionSpec::ScaledChiSquare { .. }
            | DistributionSpec::Weibull { .. } => (0.0, f64::INFINITY),
            DistributionSpec::Mixture { components } => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for c in components {
                    let (a, b) = c.spec.support();
                    lo = lo.min(a);
                    hi = hi.max(b);
                }
                (lo, hi)
            }
            DistributionSpec::Convolution { components } => {
                let (a0, b0) = components[0].support();
                let (a1, b1) = components[1].support();
                (a0 + a1, b0 + b1)
            }
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Interior points where the density has a kink or support edge; used to
    /// seed quadrature panel splits.
    fn density_features(&self) -> Vec<f64> {
        match self {
            DistributionSpec::Laplace { location, .. } => vec![*location],
            DistributionSpec::LaplaceKFold { .. } => vec![0.0],
            DistributionSpec::Exponential { .. }
            | DistributionSpec::Gamma { .. }
            | DistributionSpec::ChiSquare { .. }
            | DistributionSpec::ScaledChiSquare { .. }
            | DistributionSpec::Weibull { .. } => vec![0.0],
            DistributionSpec::Mixture { components } => {
                components.iter().flat_map(|c| c.spec.density_features()).collect()
            }
            _ => Vec::new(),
        }
    }
}

fn complex_pow(base: Complex64, exponent: f64) -> Complex64 {
    // principal branch; all call sites have Re(base) > 0
    (base.ln() * exponent).exp()
}

fn gamma_pdf(shape: f64, rate: f64, y: f64) -> f64 {
    if y < 0.0 || (y == 0.0 && shape != 1.0) {
        return 0.0;
    }
    if y == 0.0 {
        return rate; // exponential case
    }
    ((shape - 1.0) * y.ln() - rate * y + shape * rate.ln() - ln_gamma(shape)).exp()
}

/// Density of the sum of `k` i.i.d. standard Laplace variables.
///
/// The sum equals the difference of two independent Gamma(k, 1) variables,
/// which gives `f(y) = e^{-|y|} * sum_m a_m |y|^{k-1-m}` with coefficients
/// `a_m = C(k-1, m) (k-1+m)! / ((k-1)!^2 2^{k+m})`.
fn laplace_kfold_pdf(k: u32, y: f64) -> f64 {
    let k = k as i64;
    let x = y.abs();
    let mut acc = 0.0;
    for m in 0..k {
        let ln_coeff = ln_binomial(k - 1, m) + ln_gamma((k + m) as f64)
            - 2.0 * ln_gamma(k as f64)
            - ((k + m) as f64) * std::f64::consts::LN_2;
        let pow = (k - 1 - m) as f64;
        let term = if x == 0.0 && pow == 0.0 {
            ln_coeff.exp()
        } else if x == 0.0 {
            0.0
        } else {
            (ln_coeff + pow * x.ln()).exp()
        };
        acc += term;
    }
    (-x).exp() * acc
}

fn ln_binomial(n: i64, k: i64) -> f64 {
    ln_gamma((n + 1) as f64) - ln_gamma((k + 1) as f64) - ln_gamma((n - k + 1) as f64)
}

/// Numerical convolution of two component densities.
fn convolution_pdf(a: &DistributionSpec, b: &DistributionSpec, y: f64) -> f64 {
    // Integrate over the component that is singular at the origin, if any,
    // so the substitution below can flatten the singularity. Otherwise
    // integrate over the narrower component.
    let a_singular = a.gamma_like().is_some_and(|(s, _)| s < 1.0);
    let b_singular = b.gamma_like().is_some_and(|(s, _)| s < 1.0);
    let (inner, outer) = if a_singular {
        (a, b)
    } else if b_singular {
        (b, a)
    } else if a.variance() <= b.variance() {
        (a, b)
    } else {
        (b, a)
    };

    let tol = 1e-11;
    if let Some((shape, rate)) = inner.gamma_like().filter(|(s, _)| *s < 1.0) {
        // x = u^{1/shape} turns rate^s x^{s-1} e^{-rate x}/Gamma(s) dx into a
        // bounded smooth integrand in u
        let norm = (shape * rate.ln() - ln_gamma(shape)).exp() / shape;
        let x_hi = inner.mean() + 40.0 * inner.variance().sqrt();
        let u_hi = x_hi.powf(shape);
        let f = |u: f64| {
            if u <= 0.0 {
                return 0.0;
            }
            let x = u.powf(1.0 / shape);
            norm * (-rate * x).exp() * outer.pdf(y - x)
        };
        let splits: Vec<f64> = outer
            .density_features()
            .iter()
            .map(|k| y - k)
            .filter(|x| *x > 0.0)
            .map(|x| x.powf(shape))
            .chain((1..=6).map(|i| u_hi * i as f64 / 7.0))
            .collect();
        adaptive_simpson_split(&f, 0.0, u_hi, &splits, tol, 48).max(0.0)
    } else {
        let sd = inner.variance().sqrt();
        let m = inner.mean();
        let (slo, shi) = inner.support();
        let lo = (m - 40.0 * sd).max(slo);
        let hi = (m + 40.0 * sd).min(shi.min(m + 40.0 * sd));
        let f = |x: f64| inner.pdf(x) * outer.pdf(y - x);
        let mut splits: Vec<f64> = inner.density_features();
        splits.extend(outer.density_features().iter().map(|k| y - k));
        // force panels inside the live region of the inner density
        for c in [-8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0] {
            splits.push(m + c * sd);
        }
        adaptive_simpson_split(&f, lo, hi, &splits, tol, 48).max(0.0)
    }
}

enum PreparedSampler {
    Normal(rand_distr::Normal<f64>),
    Laplace { location: f64, scale: f64 },
    Exponential(rand_distr::Exp<f64>),
    Gamma(rand_distr::Gamma<f64>),
    Weibull(rand_distr::Weibull<f64>),
    Gumbel { location: f64, scale: f64 },
    LaplaceKFold { k: u32 },
    Scaled { inner: Box<PreparedSampler>, factor: f64 },
    Mixture { cumulative: Vec<f64>, parts: Vec<PreparedSampler> },
    Sum(Box<(PreparedSampler, PreparedSampler)>),
}

impl PreparedSampler {
    fn new(spec: &DistributionSpec) -> Self {
        match spec {
            DistributionSpec::Normal { mean, sd } => {
                PreparedSampler::Normal(rand_distr::Normal::new(*mean, *sd).expect("validated"))
            }
            DistributionSpec::Laplace { location, scale } => PreparedSampler::Laplace {
                location: *location,
                scale: *scale,
            },
            DistributionSpec::Exponential { rate } => {
                PreparedSampler::Exponential(rand_distr::Exp::new(*rate).expect("validated"))
            }
            DistributionSpec::Gamma { shape, rate } => {
                PreparedSampler::Gamma(rand_distr::Gamma::new(*shape, 1.0 / rate).expect("validated"))
            }
            DistributionSpec::Weibull { shape, scale } => {
                PreparedSampler::Weibull(rand_distr::Weibull::new(*scale, *shape).expect("validated"))
            }
            DistributionSpec::Gumbel { location, scale } => PreparedSampler::Gumbel {
                location: *location,
                scale: *scale,
            },
            DistributionSpec::ChiSquare { df } => PreparedSampler::Gamma(
                rand_distr::Gamma::new(df / 2.0, 2.0).expect("validated"),
            ),
            DistributionSpec::ScaledChiSquare { df, divisor } => PreparedSampler::Scaled {
                inner: Box::new(PreparedSampler::Gamma(
                    rand_distr::Gamma::new(df / 2.0, 2.0).expect("validated"),
                )),
                factor: 1.0 / divisor,
            },
            DistributionSpec::LaplaceKFold { k } => PreparedSampler::LaplaceKFold { k: *k },
            DistributionSpec::Mixture { components } => {
                let mut cumulative = Vec::with_capacity(components.len());
                let mut acc = 0.0;
                for c in components {
                    acc += c.weight;
                    cumulative.push(acc);
                }
                PreparedSampler::Mixture {
                    cumulative,
                    parts: components.iter().map(|c| PreparedSampler::new(&c.spec)).collect(),
                }
            }
            DistributionSpec::Convolution { components } => PreparedSampler::Sum(Box::new((
                PreparedSampler::new(&components[0]),
                PreparedSampler::new(&components[1]),
            ))),
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            PreparedSampler::Normal(d) => d.sample(rng),
            PreparedSampler::Laplace { location, scale } => {
                location + scale * standard_laplace(rng)
            }
            PreparedSampler::Exponential(d) => d.sample(rng),
            PreparedSampler::Gamma(d) => d.sample(rng),
            PreparedSampler::Weibull(d) => d.sample(rng),
            PreparedSampler::Gumbel { location, scale } => {
                let u: f64 = positive_uniform(rng);
                location - scale * (-u.ln()).ln()
            }
            PreparedSampler::LaplaceKFold { k } => {
                (0..*k).map(|_| standard_laplace(rng)).sum()
            }
            PreparedSampler::Scaled { inner, factor } => factor * inner.draw(rng),
            PreparedSampler::Mixture { cumulative, parts } => {
                let u: f64 = rng.random();
                let total = *cumulative.last().expect("nonempty");
                let target = u * total;
                let idx = cumulative
                    .iter()
                    .position(|c| target < *c)
                    .unwrap_or(parts.len() - 1);
                parts[idx].draw(rng)
            }
            PreparedSampler::Sum(pair) => pair.0.draw(rng) + pair.1.draw(rng),
        }
    }
}

fn standard_laplace<R: Rng>(rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    let mag = (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE);
    -u.signum() * mag.ln()
}

fn positive_uniform<R: Rng>(rng: &mut R) -> f64 {
    rng.random::<f64>().max(f64::MIN_POSITIVE)
}
