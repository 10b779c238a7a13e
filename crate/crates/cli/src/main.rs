//! Command-line front end: deconvolve user data, run built-in or custom
//! benchmark scenarios, and render density curves as SVG.
//!
//! Exit codes: 0 success, 2 variance-order violation, 3 unreadable or
//! malformed input, 4 unknown scenario id, 64 usage errors.

mod csvio;
mod svg;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use deconvkit_core::npfd::{NpfdConfig, NpfdError, NpfdResult};
use deconvkit_core::DistributionSpec;
use deconvkit_simbench::{
    builtin_scenarios, find_scenario, replicate_curves, run_scenario, RunOptions, ScenarioSpec,
};

use crate::csvio::{read_density_csv, read_input_csv, CsvError, InputData};
use crate::svg::{line_chart, Series};

#[derive(Parser)]
#[command(
    name = "deconvkit",
    version,
    about = "Nonparametric density deconvolution toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Deconvolve a CSV data set (columns `x,z`, `z1,z2`, or `z` with
    /// --error-dist).
    Deconvolve(DeconvolveArgs),
    /// Run a benchmark scenario and summarize per-method errors.
    Simulate(SimulateArgs),
    /// Render density results as an SVG line chart.
    Plot(PlotArgs),
}

#[derive(Args, Clone)]
struct EstimatorFlags {
    /// Threshold for the power search (default 0.001, or the small-sample
    /// rule when either sample has at most 200 points).
    #[arg(long)]
    epsilon: Option<f64>,
    /// Persistence margin for the threshold check (default: two grid steps).
    #[arg(long)]
    delta: Option<f64>,
    /// Largest power considered.
    #[arg(long)]
    n_max: Option<u32>,
    /// Spline degrees of freedom for the mixed-sample density fit.
    #[arg(long)]
    df: Option<usize>,
    /// Spline degrees of freedom for the convolving-sample fit.
    #[arg(long)]
    df_x: Option<usize>,
    /// Density evaluation points for the transform quadrature.
    #[arg(long)]
    ell: Option<usize>,
    /// Output grid size.
    #[arg(long)]
    n_y: Option<usize>,
    /// Force empirical Fourier transforms.
    #[arg(long)]
    empirical_ft: bool,
    /// Clip negative density values to zero.
    #[arg(long)]
    clip_negative: bool,
    /// Use the plain Riemann-sum inversion normalization (diagnostics).
    #[arg(long)]
    riemann_normalization: bool,
    /// JSON file with estimator settings; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DeconvolveArgs {
    /// Input CSV with header `x,z`, `z1,z2`, or `z`.
    #[arg(long)]
    input: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Error distribution as inline JSON or `@file.json`
    /// (e.g. '{"family":"normal","params":{"mean":0.0,"sd":1.0}}').
    #[arg(long)]
    error_dist: Option<String>,
    /// Also write SVG plots of the density and the Fourier window.
    #[arg(long)]
    plot: bool,
    /// Accepted for interface uniformity; the pipeline itself is
    /// deterministic and draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    estimator: EstimatorFlags,
}

#[derive(Args)]
struct SimulateArgs {
    /// List all built-in scenario ids and exit.
    #[arg(long)]
    list: bool,
    /// Built-in scenario id (see --list).
    #[arg(long)]
    scenario: Option<String>,
    /// JSON file holding a full scenario specification.
    #[arg(long)]
    spec_file: Option<PathBuf>,
    /// Number of simulation replicates.
    #[arg(long, default_value_t = 100)]
    reps: usize,
    /// Base seed for the replicate streams (default: the scenario's own).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: DECONVKIT_THREADS or all logical cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write an SVG of the representative replicate.
    #[arg(long)]
    plot: bool,
    #[command(flatten)]
    estimator: EstimatorFlags,
}

#[derive(Args)]
struct PlotArgs {
    /// Result JSON or density CSV produced by the other subcommands.
    #[arg(long)]
    input: PathBuf,
    /// Second result to overlay.
    #[arg(long)]
    compare: Option<PathBuf>,
    /// Output SVG path.
    #[arg(long)]
    out: PathBuf,
}

enum AppError {
    Usage(String),
    VarianceOrder(String),
    Input(String),
    UnknownScenario(String),
    Other(String),
}

impl AppError {
    fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 64,
            AppError::VarianceOrder(_) => 2,
            AppError::Input(_) => 3,
            AppError::UnknownScenario(_) => 4,
            AppError::Other(_) => 1,
        }
    }

    fn message(&self) -> String {
        match self {
            AppError::Usage(m) => m.clone(),
            AppError::VarianceOrder(m) => format!("variance order: {m}"),
            AppError::Input(m) => m.clone(),
            AppError::UnknownScenario(id) => format!("unknown scenario id: {id}"),
            AppError::Other(m) => m.clone(),
        }
    }
}

impl From<NpfdError> for AppError {
    fn from(e: NpfdError) -> Self {
        match e {
            NpfdError::VarianceOrder { .. } => AppError::VarianceOrder(e.to_string()),
            other => AppError::Other(other.to_string()),
        }
    }
}

impl From<CsvError> for AppError {
    fn from(e: CsvError) -> Self {
        AppError::Input(e.to_string())
    }
}

impl From<deconvkit_simbench::BenchError> for AppError {
    fn from(e: deconvkit_simbench::BenchError) -> Self {
        match e {
            deconvkit_simbench::BenchError::UnknownScenario(id) => AppError::UnknownScenario(id),
            deconvkit_simbench::BenchError::Npfd(inner) => inner.into(),
            other => AppError::Other(other.to_string()),
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 64,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match cli.command {
        Command::Deconvolve(args) => cmd_deconvolve(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Plot(args) => cmd_plot(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}

fn write_file(dir: &Path, name: &str, content: &str) -> Result<(), AppError> {
    let path = dir.join(name);
    std::fs::write(&path, content)
        .map_err(|e| AppError::Other(format!("cannot write {}: {e}", path.display())))
}

fn ensure_out_dir(dir: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(dir).map_err(|e| {
        AppError::Input(format!(
            "cannot create output directory {}: {e}",
            dir.display()
        ))
    })
}

/// Field-level overlay: values present in the JSON file replace those in
/// `base`; everything else is kept.
fn overlay_config_file(base: &NpfdConfig, path: &Path) -> Result<NpfdConfig, AppError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AppError::Input(format!("cannot read config {}: {e}", path.display())))?;
    let overlay: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| AppError::Input(format!("config {}: {e}", path.display())))?;
    let mut merged = serde_json::to_value(base).expect("config serializes");
    let (Some(target), Some(source)) = (merged.as_object_mut(), overlay.as_object()) else {
        return Err(AppError::Input(format!(
            "config {} must be a JSON object",
            path.display()
        )));
    };
    for (k, v) in source {
        target.insert(k.clone(), v.clone());
    }
    serde_json::from_value(merged)
        .map_err(|e| AppError::Input(format!("config {}: {e}", path.display())))
}

fn apply_estimator_flags(base: NpfdConfig, flags: &EstimatorFlags) -> Result<NpfdConfig, AppError> {
    let mut cfg = match &flags.config {
        Some(path) => overlay_config_file(&base, path)?,
        None => base,
    };
    if let Some(v) = flags.epsilon {
        cfg.epsilon = Some(v);
    }
    if let Some(v) = flags.delta {
        cfg.delta = Some(v);
    }
    if let Some(v) = flags.n_max {
        cfg.n_max = v;
    }
    if let Some(v) = flags.df {
        cfg.df = v;
    }
    if let Some(v) = flags.df_x {
        cfg.df_x = Some(v);
    }
    if let Some(v) = flags.ell {
        cfg.ell = v;
    }
    if let Some(v) = flags.n_y {
        cfg.n_y = v;
    }
    if flags.empirical_ft {
        cfg.use_empirical_ft = true;
    }
    if flags.clip_negative {
        cfg.clip_negative = true;
    }
    if flags.riemann_normalization {
        cfg.riemann_normalization = true;
    }
    Ok(cfg)
}

fn parse_error_dist(raw: &str) -> Result<DistributionSpec, AppError> {
    let json = if let Some(path) = raw.strip_prefix('@') {
        std::fs::read_to_string(path)
            .map_err(|e| AppError::Input(format!("cannot read error distribution {path}: {e}")))?
    } else {
        raw.to_string()
    };
    let spec: DistributionSpec = serde_json::from_str(&json)
        .map_err(|e| AppError::Input(format!("error distribution JSON: {e}")))?;
    spec.validate()
        .map_err(|e| AppError::Input(format!("error distribution: {e}")))?;
    Ok(spec)
}

fn cmd_deconvolve(args: DeconvolveArgs) -> Result<(), AppError> {
    let cfg = apply_estimator_flags(NpfdConfig::default(), &args.estimator)?;
    let data = read_input_csv(&args.input)?;
    let result: NpfdResult = match (&data, &args.error_dist) {
        (InputData::TwoSample { x, z }, None) => deconvkit_core::npfd::npfd_deconvolve(x, z, &cfg)?,
        (InputData::Replicates(reps), None) => deconvkit_core::npfd::npfd_replicates(reps, &cfg)?,
        (InputData::MixedOnly(z), Some(raw)) => {
            let error = parse_error_dist(raw)?;
            deconvkit_core::npfd::npfd_known_error(z, &error, &cfg)?
        }
        (InputData::MixedOnly(_), None) => {
            return Err(AppError::Usage(
                "a single-column `z` input needs --error-dist".into(),
            ))
        }
        (_, Some(_)) => {
            return Err(AppError::Usage(
                "--error-dist only applies to single-column `z` input".into(),
            ))
        }
    };

    ensure_out_dir(&args.out)?;
    let json = serde_json::to_string_pretty(&result)
        .map_err(|e| AppError::Other(format!("serialize result: {e}")))?;
    write_file(&args.out, "result.json", &(json + "\n"))?;
    write_file(&args.out, "density.csv", &result.density_csv())?;
    write_file(&args.out, "fourier.csv", &result.fourier_window.to_csv())?;
    if args.plot {
        let density_series = Series {
            label: "estimate".into(),
            points: result
                .ygrid
                .iter()
                .zip(result.density.iter())
                .map(|(y, f)| (*y, *f))
                .collect(),
        };
        write_file(
            &args.out,
            "density.svg",
            &line_chart("Deconvolved density", "y", "density", &[density_series]),
        )?;
        let grid = &result.fourier_window.grid;
        let modulus_series = Series {
            label: "|quotient^N|".into(),
            points: result
                .fourier_window
                .values
                .iter()
                .enumerate()
                .map(|(i, v)| (grid.t(i), v.norm()))
                .collect(),
        };
        write_file(
            &args.out,
            "fourier.svg",
            &line_chart("Powered Fourier quotient", "t", "modulus", &[modulus_series]),
        )?;
    }
    println!(
        "deconvolved {} points: N = {}, gamma = {:.4}, outputs in {}",
        result.ygrid.len(),
        result.n,
        result.gamma,
        args.out.display()
    );
    Ok(())
}

fn resolve_threads(flag: Option<usize>) -> usize {
    if let Some(t) = flag {
        return t;
    }
    if let Ok(v) = std::env::var("DECONVKIT_THREADS") {
        if let Ok(t) = v.parse::<usize>() {
            return t;
        }
    }
    0
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), AppError> {
    if args.list {
        for s in builtin_scenarios() {
            println!("{}", s.id);
        }
        return Ok(());
    }
    if args.reps == 0 {
        return Err(AppError::Usage("--reps must be at least 1".into()));
    }
    let mut spec: ScenarioSpec = match (&args.scenario, &args.spec_file) {
        (Some(id), None) => {
            find_scenario(id).ok_or_else(|| AppError::UnknownScenario(id.clone()))?
        }
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::Input(format!("cannot read {}: {e}", path.display())))?;
            let spec: ScenarioSpec = serde_json::from_str(&text)
                .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
            spec.validate().map_err(AppError::Input)?;
            spec
        }
        _ => {
            return Err(AppError::Usage(
                "exactly one of --scenario or --spec-file is required (or --list)".into(),
            ))
        }
    };
    spec.npfd = apply_estimator_flags(spec.npfd.clone(), &args.estimator)?;

    let out = args
        .out
        .clone()
        .ok_or_else(|| AppError::Usage("--out is required for a simulation run".into()))?;
    ensure_out_dir(&out)?;

    let options = RunOptions {
        replicates: args.reps,
        seed: args.seed,
        threads: resolve_threads(args.threads),
    };
    let table = run_scenario(&spec, options)?;
    let curves = replicate_curves(&spec, table.representative, args.seed)?;

    let json = serde_json::to_string_pretty(&table)
        .map_err(|e| AppError::Other(format!("serialize summary: {e}")))?;
    write_file(&out, "summary.json", &(json + "\n"))?;
    write_file(&out, "summary.csv", &table.to_csv())?;
    write_file(&out, "replicates.csv", &table.replicate_csv())?;
    write_file(&out, "representative.csv", &curves.to_csv())?;
    if args.plot {
        let mut series = vec![Series {
            label: "truth".into(),
            points: curves
                .ygrid
                .iter()
                .zip(curves.truth.iter())
                .map(|(y, f)| (*y, *f))
                .collect(),
        }];
        for (method, density) in &curves.curves {
            series.push(Series {
                label: method.name().to_string(),
                points: curves
                    .ygrid
                    .iter()
                    .zip(density.iter())
                    .map(|(y, f)| (*y, *f))
                    .collect(),
            });
        }
        write_file(
            &out,
            "representative.svg",
            &line_chart(
                &format!("{}: representative replicate", spec.id),
                "y",
                "density",
                &series,
            ),
        )?;
    }
    for m in &table.methods {
        println!(
            "{}: {} median 10xISE = {:.4} [{:.4}, {:.4}]",
            spec.id,
            m.method.name(),
            m.median,
            m.q1,
            m.q3
        );
    }
    println!(
        "representative replicate {} (N = {}), outputs in {}",
        table.representative,
        curves.npfd_n,
        out.display()
    );
    Ok(())
}

fn load_curve(path: &Path) -> Result<Series, AppError> {
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "curve".into());
    let ext = path.extension().map(|e| e.to_string_lossy().to_lowercase());
    let (ys, fs) = match ext.as_deref() {
        Some("json") => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| AppError::Input(format!("cannot read {}: {e}", path.display())))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| AppError::Input(format!("{}: {e}", path.display())))?;
            let arr = |key: &str| -> Result<Vec<f64>, AppError> {
                value
                    .get(key)
                    .and_then(|v| v.as_array())
                    .ok_or_else(|| {
                        AppError::Input(format!("{}: missing array '{key}'", path.display()))
                    })?
                    .iter()
                    .map(|v| {
                        v.as_f64().ok_or_else(|| {
                            AppError::Input(format!(
                                "{}: non-numeric entry in '{key}'",
                                path.display()
                            ))
                        })
                    })
                    .collect()
            };
            (arr("ygrid")?, arr("density")?)
        }
        _ => read_density_csv(path)?,
    };
    if ys.len() != fs.len() || ys.is_empty() {
        return Err(AppError::Input(format!(
            "{}: grid and density lengths differ or are empty",
            path.display()
        )));
    }
    Ok(Series {
        label,
        points: ys.into_iter().zip(fs).collect(),
    })
}

fn cmd_plot(args: PlotArgs) -> Result<(), AppError> {
    let mut series = vec![load_curve(&args.input)?];
    if let Some(other) = &args.compare {
        series.push(load_curve(other)?);
    }
    let chart = line_chart("Density estimate", "y", "density", &series);
    if let Some(dir) = args.out.parent() {
        if !dir.as_os_str().is_empty() {
            ensure_out_dir(dir)?;
        }
    }
    std::fs::write(&args.out, chart)
        .map_err(|e| AppError::Other(format!("cannot write {}: {e}", args.out.display())))?;
    println!("wrote {}", args.out.display());
    Ok(())
}
