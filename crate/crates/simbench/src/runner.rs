//! Replicated scenario execution: data generation with variance-order
//! regeneration, per-method integrated squared errors, and quartile
//! summaries.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use deconvkit_core::baselines::{
    dkm_deconvolve, fdd_deconvolve, mcd_deconvolve, rmd_deconvolve, BaselineConfig, BaselineError,
    BaselineMethod,
};
use deconvkit_core::npfd::{
    npfd_deconvolve, npfd_known_error, npfd_replicates, NpfdError, NpfdResult,
};
use deconvkit_core::{DistributionSpec, Replicates, Sample};

use crate::scenario::{BenchMethod, DataDesign, ScenarioSpec};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown scenario id: {0}")]
    UnknownScenario(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("scenario {id} replicate {replicate} still degenerate after {attempts} regenerations")]
    ScenarioInfeasible {
        id: String,
        replicate: usize,
        attempts: usize,
    },
    #[error("ise grid too coarse: need at least 32 equidistant points")]
    GridTooCoarse,
    #[error(transparent)]
    Npfd(#[from] NpfdError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
}

/// Trapezoid-rule integrated squared error of tabulated values against a
/// truth density evaluated on the same grid.
pub fn ise(fhat: &[f64], ygrid: &[f64], truth: &DistributionSpec) -> Result<f64, BenchError> {
    let truth_values: Vec<f64> = ygrid.iter().map(|y| truth.pdf(*y)).collect();
    ise_tabulated(fhat, &truth_values, ygrid)
}

/// Same, with the truth already tabulated.
pub fn ise_tabulated(fhat: &[f64], truth: &[f64], ygrid: &[f64]) -> Result<f64, BenchError> {
    if ygrid.len() < 32 || fhat.len() != ygrid.len() || truth.len() != ygrid.len() {
        return Err(BenchError::GridTooCoarse);
    }
    let h = ygrid[1] - ygrid[0];
    for w in ygrid.windows(2) {
        if ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs() {
            return Err(BenchError::GridTooCoarse);
        }
    }
    let sq = |i: usize| {
        let d = fhat[i] - truth[i];
        d * d
    };
    let mut acc = 0.5 * (sq(0) + sq(ygrid.len() - 1));
    for i in 1..ygrid.len() - 1 {
        acc += sq(i);
    }
    Ok(acc * h)
}

/// Median and quartiles by the median-of-halves convention: the median
/// splits the sorted values; the lower/upper quartile is the median of the
/// strictly lower/upper half (the middle element is excluded when the count
/// is odd).
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n == 1 {
        return (sorted[0], sorted[0], sorted[0]);
    }
    let median = mid_value(&sorted);
    let lower = &sorted[..n / 2];
    let upper = &sorted[n.div_ceil(2)..];
    (mid_value(lower), median, mid_value(upper))
}

fn mid_value(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Box-plot statistics with outliers removed by the 1.5 IQR rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub lo_whisker: f64,
    pub hi_whisker: f64,
    pub outliers_removed: usize,
}

pub fn box_stats(values: &[f64]) -> BoxStats {
    let (q1, median, q3) = quartiles(values);
    let iqr = q3 - q1;
    let lo_fence = q1 - 1.5 * iqr;
    let hi_fence = q3 + 1.5 * iqr;
    let kept: Vec<f64> = values
        .iter()
        .cloned()
        .filter(|v| *v >= lo_fence && *v <= hi_fence)
        .collect();
    let lo_whisker = kept.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_whisker = kept.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    BoxStats {
        q1,
        median,
        q3,
        lo_whisker,
        hi_whisker,
        outliers_removed: values.len() - kept.len(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub method: BenchMethod,
    /// 10 x ISE per replicate, in replicate order.
    pub raw: Vec<f64>,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub boxplot: BoxStats,
}

#[derive(Debug, Clone, Serialize)]
pub struct SummaryTable {
    pub scenario_id: String,
    pub replicates: usize,
    pub base_seed: u64,
    pub methods: Vec<MethodSummary>,
    /// Power chosen per replicate.
    pub npfd_powers: Vec<u32>,
    /// Replicate whose 10 x ISE lies closest to the overall median.
    pub representative: usize,
    /// Total data regenerations across replicates (variance-order rule).
    pub regenerated: usize,
}

impl SummaryTable {
    pub fn method(&self, m: BenchMethod) -> Option<&MethodSummary> {
        self.methods.iter().find(|s| s.method == m)
    }

    /// One row per method: `method,median,q1,q3`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,median,q1,q3,replicates\n");
        for m in &self.methods {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                m.method.name(),
                m.median,
                m.q1,
                m.q3,
                m.raw.len()
            ));
        }
        out
    }

    /// One row per replicate: `replicate,npfd_n,<method columns...>`.
    pub fn replicate_csv(&self) -> String {
        let mut header = String::from("replicate,npfd_n");
        for m in &self.methods {
            header.push(',');
            header.push_str(m.method.name());
        }
        header.push('\n');
        let mut out = header;
        for i in 0..self.replicates {
            out.push_str(&format!("{},{}", i, self.npfd_powers.get(i).copied().unwrap_or(0)));
            for m in &self.methods {
                out.push_str(&format!(",{}", m.raw[i]));
            }
            out.push('\n');
        }
        out
    }
}

struct RepOutcome {
    ises: Vec<(BenchMethod, f64)>,
    npfd_n: u32,
    regenerated: usize,
}

/// One replicate's generated data.
enum RepData {
    TwoSample { x: Sample, z: Sample },
    Known { z: Sample },
    Paired { replicates: Replicates },
}

fn splitmix64(mut state: u64) -> u64 {
    state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream seed for one replicate, independent across replicate indices.
pub fn replicate_seed(base_seed: u64, replicate: usize) -> u64 {
    splitmix64(base_seed ^ splitmix64(replicate as u64))
}

fn add_columns(y: &[f64], e: &[f64]) -> Vec<f64> {
    y.iter().zip(e.iter()).map(|(a, b)| a + b).collect()
}

/// Draw one replicate's data, retrying (bounded) whenever the empirical
/// variance of the convolving side reaches that of the mixed side.
fn generate(
    spec: &ScenarioSpec,
    rng: &mut ChaCha8Rng,
    max_attempts: usize,
) -> Result<(RepData, usize), ()> {
    for attempt in 0..max_attempts {
        match &spec.design {
            DataDesign::ConvolvingSample { n_x, n_z } => {
                let x = Sample::new(spec.convolving.sample_with(rng, *n_x)).unwrap();
                let y = spec.target.sample_with(rng, *n_z);
                let e = spec.convolving.sample_with(rng, *n_z);
                let z = Sample::new(add_columns(&y, &e)).unwrap();
                if x.variance() < z.variance() {
                    return Ok((RepData::TwoSample { x, z }, attempt));
                }
            }
            DataDesign::KnownError { n } => {
                let y = spec.target.sample_with(rng, *n);
                let e = spec.convolving.sample_with(rng, *n);
                let z = Sample::new(add_columns(&y, &e)).unwrap();
                let x = Sample::new(e).unwrap();
                if x.variance() < z.variance() && spec.convolving.variance() < z.variance() {
                    return Ok((RepData::Known { z }, attempt));
                }
            }
            DataDesign::Replicates { n, profile } => {
                let y = spec.target.sample_with(rng, *n);
                let (e1, e2) = match profile {
                    None => (
                        spec.convolving.sample_with(rng, *n),
                        spec.convolving.sample_with(rng, *n),
                    ),
                    Some(p) => {
                        let vars = p.variances(*n);
                        let std_normal = DistributionSpec::Normal { mean: 0.0, sd: 1.0 };
                        let g1 = std_normal.sample_with(rng, *n);
                        let g2 = std_normal.sample_with(rng, *n);
                        let scale = |g: Vec<f64>| -> Vec<f64> {
                            g.into_iter()
                                .zip(vars.iter())
                                .map(|(v, s2)| v * s2.sqrt())
                                .collect()
                        };
                        (scale(g1), scale(g2))
                    }
                };
                let z1 = add_columns(&y, &e1);
                let z2 = add_columns(&y, &e2);
                let replicates = Replicates::new(z1, z2).unwrap();
                let err = deconvkit_core::npfd::replicates_to_error_sample(&replicates);
                let z = replicates.first_sample();
                if err.variance() < z.variance() {
                    return Ok((RepData::Paired { replicates }, attempt));
                }
            }
        }
    }
    Err(())
}

fn run_npfd(spec: &ScenarioSpec, data: &RepData) -> Result<NpfdResult, NpfdError> {
    match data {
        RepData::TwoSample { x, z } => npfd_deconvolve(x, z, &spec.npfd),
        RepData::Known { z } => npfd_known_error(z, &spec.convolving, &spec.npfd),
        RepData::Paired { replicates } => npfd_replicates(replicates, &spec.npfd),
    }
}

fn run_baseline(
    method: BenchMethod,
    spec: &ScenarioSpec,
    data: &RepData,
    ygrid: &[f64],
) -> Result<Vec<f64>, BenchError> {
    let cfg = match method {
        BenchMethod::Fdd => BaselineConfig::new(BaselineMethod::Fdd),
        BenchMethod::Mcd => BaselineConfig::new(BaselineMethod::Mcd),
        BenchMethod::Dkm => BaselineConfig::new(BaselineMethod::Dkm),
        BenchMethod::Rmd => BaselineConfig::new(BaselineMethod::Rmd),
        BenchMethod::Npfd => {
            return Err(BenchError::InvalidScenario(
                "the primary estimator is not a baseline".into(),
            ))
        }
    };
    let density = match (cfg.method, data) {
        (BaselineMethod::Fdd, RepData::TwoSample { x, z }) => {
            fdd_deconvolve(x, z, ygrid, cfg.damping, cfg.grid)?.density
        }
        (BaselineMethod::Mcd, RepData::TwoSample { x, z }) => {
            mcd_deconvolve(x, z, ygrid, cfg.bandwidth, cfg.kernel, cfg.grid)?.density
        }
        (BaselineMethod::Dkm, RepData::Known { z }) => {
            dkm_deconvolve(z, &spec.convolving, ygrid, cfg.bandwidth, cfg.kernel, cfg.grid)?.density
        }
        (BaselineMethod::Rmd, RepData::Paired { replicates }) => {
            rmd_deconvolve(replicates, ygrid, cfg.bandwidth, cfg.ridge, cfg.kernel, cfg.grid)?
                .density
        }
        _ => {
            return Err(BenchError::InvalidScenario(format!(
                "method {} does not fit the data design of scenario {}",
                method.name(),
                spec.id
            )))
        }
    };
    Ok(density)
}

fn run_replicate(spec: &ScenarioSpec, replicate: usize, base_seed: u64) -> Result<RepOutcome, BenchError> {
    let seed = replicate_seed(base_seed, replicate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let max_attempts = 100;
    let mut regenerated = 0;
    for _ in 0..max_attempts {
        let (data, regen) = generate(spec, &mut rng, max_attempts - regenerated).map_err(|_| {
            BenchError::ScenarioInfeasible {
                id: spec.id.clone(),
                replicate,
                attempts: max_attempts,
            }
        })?;
        regenerated += regen;
        // a failed fit on degenerate data counts as a regeneration too
        let npfd_result = match run_npfd(spec, &data) {
            Ok(r) => r,
            Err(NpfdError::VarianceOrder { .. }) | Err(NpfdError::Density(_)) => {
                regenerated += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let truth_values: Vec<f64> = npfd_result.ygrid.iter().map(|y| spec.target.pdf(*y)).collect();
        let mut ises = Vec::with_capacity(spec.methods.len());
        for &method in &spec.methods {
            let value = match method {
                BenchMethod::Npfd => {
                    ise_tabulated(&npfd_result.density, &truth_values, &npfd_result.ygrid)?
                }
                other => {
                    let density = run_baseline(other, spec, &data, &npfd_result.ygrid)?;
                    ise_tabulated(&density, &truth_values, &npfd_result.ygrid)?
                }
            };
            ises.push((method, 10.0 * value));
        }
        return Ok(RepOutcome {
            ises,
            npfd_n: npfd_result.n,
            regenerated,
        });
    }
    Err(BenchError::ScenarioInfeasible {
        id: spec.id.clone(),
        replicate,
        attempts: max_attempts,
    })
}

/// Execution knobs for a scenario run.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub replicates: usize,
    /// Overrides the scenario's own base seed when set.
    pub seed: Option<u64>,
    /// Worker threads; 0 means the rayon default.
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            replicates: 100,
            seed: None,
            threads: 0,
        }
    }
}

/// Run every replicate of a scenario and summarize the 10 x ISE values.
pub fn run_scenario(spec: &ScenarioSpec, options: RunOptions) -> Result<SummaryTable, BenchError> {
    spec.validate().map_err(BenchError::InvalidScenario)?;
    if options.replicates == 0 {
        return Err(BenchError::InvalidScenario("replicate count must be positive".into()));
    }
    let base_seed = options.seed.unwrap_or(spec.base_seed);
    let indices: Vec<usize> = (0..options.replicates).collect();
    let job = || -> Result<Vec<RepOutcome>, BenchError> {
        indices
            .par_iter()
            .map(|&i| run_replicate(spec, i, base_seed))
            .collect()
    };
    let outcomes = if options.threads == 0 {
        job()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.threads)
            .build()
            .map_err(|e| BenchError::InvalidScenario(format!("thread pool: {e}")))?;
        pool.install(job)?
    };

    let mut methods = Vec::with_capacity(spec.methods.len());
    for (slot, &method) in spec.methods.iter().enumerate() {
        let raw: Vec<f64> = outcomes.iter().map(|o| o.ises[slot].1).collect();
        debug_assert!(outcomes.iter().all(|o| o.ises[slot].0 == method));
        let (q1, median, q3) = quartiles(&raw);
        methods.push(MethodSummary {
            method,
            boxplot: box_stats(&raw),
            raw,
            median,
            q1,
            q3,
        });
    }
    let npfd_powers: Vec<u32> = outcomes.iter().map(|o| o.npfd_n).collect();
    let regenerated = outcomes.iter().map(|o| o.regenerated).sum();

    // representative replicate: the one whose primary-method error sits
    // closest to the median
    let primary = &methods[0];
    let mut representative = 0;
    let mut best = f64::INFINITY;
    for (i, v) in primary.raw.iter().enumerate() {
        let d = (v - primary.median).abs();
        if d < best {
            best = d;
            representative = i;
        }
    }

    Ok(SummaryTable {
        scenario_id: spec.id.clone(),
        replicates: options.replicates,
        base_seed,
        methods,
        npfd_powers,
        representative,
        regenerated,
    })
}

/// Density curves of one replicate, for plotting.
#[derive(Debug, Clone, Serialize)]
pub struct CurveSet {
    pub replicate: usize,
    pub npfd_n: u32,
    pub ygrid: Vec<f64>,
    pub truth: Vec<f64>,
    pub curves: Vec<(BenchMethod, Vec<f64>)>,
}

impl CurveSet {
    pub fn to_csv(&self) -> String {
        let mut header = String::from("y,truth");
        for (m, _) in &self.curves {
            header.push(',');
            header.push_str(m.name());
        }
        header.push('\n');
        let mut out = header;
        for i in 0..self.ygrid.len() {
            out.push_str(&format!("{},{}", self.ygrid[i], self.truth[i]));
            for (_, c) in &self.curves {
                out.push_str(&format!(",{}", c[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// Re-run a single replicate and return its density curves.
pub fn replicate_curves(
    spec: &ScenarioSpec,
    replicate: usize,
    base_seed: Option<u64>,
) -> Result<CurveSet, BenchError> {
    let base = base_seed.unwrap_or(spec.base_seed);
    let seed = replicate_seed(base, replicate);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (data, _) = generate(spec, &mut rng, 100).map_err(|_| BenchError::ScenarioInfeasible {
        id: spec.id.clone(),
        replicate,
        attempts: 100,
    })?;
    let npfd_result = run_npfd(spec, &data)?;
    let truth: Vec<f64> = npfd_result.ygrid.iter().map(|y| spec.target.pdf(*y)).collect();
    let mut curves = Vec::new();
    for &method in &spec.methods {
        let density = match method {
            BenchMethod::Npfd => npfd_result.density.clone(),
            other => run_baseline(other, spec, &data, &npfd_result.ygrid)?,
        };
        curves.push((method, density));
    }
    Ok(CurveSet {
        replicate,
        npfd_n: npfd_result.n,
        ygrid: npfd_result.ygrid.clone(),
        truth,
        curves,
    })
}

/// Fraction of generated data sets whose convolving-side variance reaches
/// the mixed-side variance (diagnostic for scenario health).
pub fn variance_violation_rate(spec: &ScenarioSpec, draws: usize, base_seed: u64) -> f64 {
    let mut violations = 0usize;
    for i in 0..draws {
        let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(base_seed, i));
        match &spec.design {
            DataDesign::ConvolvingSample { n_x, n_z } => {
                let x = Sample::new(spec.convolving.sample_with(&mut rng, *n_x)).unwrap();
                let y = spec.target.sample_with(&mut rng, *n_z);
                let e = spec.convolving.sample_with(&mut rng, *n_z);
                let z = Sample::new(add_columns(&y, &e)).unwrap();
                if x.variance() >= z.variance() {
                    violations += 1;
                }
            }
            DataDesign::KnownError { n } => {
                let y = spec.target.sample_with(&mut rng, *n);
                let e = spec.convolving.sample_with(&mut rng, *n);
                let z = Sample::new(add_columns(&y, &e)).unwrap();
                let x = Sample::new(e).unwrap();
                if x.variance() >= z.variance() {
                    violations += 1;
                }
            }
            DataDesign::Replicates { n, profile } => {
                let y = spec.target.sample_with(&mut rng, *n);
                let (e1, e2) = match profile {
                    None => (
                        spec.convolving.sample_with(&mut rng, *n),
                        spec.convolving.sample_with(&mut rng, *n),
                    ),
                    Some(p) => {
                        let vars = p.variances(*n);
                        let std_normal = DistributionSpec::Normal { mean: 0.0, sd: 1.0 };
                        let g1 = std_normal.sample_with(&mut rng, *n);
                        let g2 = std_normal.sample_with(&mut rng, *n);
                        (
                            g1.into_iter().zip(vars.iter()).map(|(v, s)| v * s.sqrt()).collect(),
                            g2.into_iter().zip(vars.iter()).map(|(v, s)| v * s.sqrt()).collect(),
                        )
                    }
                };
                let replicates =
                    Replicates::new(add_columns(&y, &e1), add_columns(&y, &e2)).unwrap();
                let err = deconvkit_core::npfd::replicates_to_error_sample(&replicates);
                if err.variance() >= replicates.first_sample().variance() {
                    violations += 1;
                }
            }
        }
    }
    violations as f64 / draws as f64
}
