//! Benchmark harness for the deconvolution toolkit: a registry of named
//! simulation scenarios, a deterministic replicated runner, and integrated
//! squared error summaries.

pub mod runner;
pub mod scenario;

pub use runner::{
    box_stats, ise, ise_tabulated, quartiles, replicate_curves, run_scenario, BenchError,
    BoxStats, CurveSet, MethodSummary, RunOptions, SummaryTable,
};
pub use scenario::{builtin_scenarios, find_scenario, BenchMethod, DataDesign, ScenarioSpec, VarianceProfile};
