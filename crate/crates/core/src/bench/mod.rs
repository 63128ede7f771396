//! Evaluation layer: golden references, marginal accuracy, IRIS and
//! config-driven benchmark runs.

mod golden;
mod metrics;
mod runner;

pub use golden::{build_golden, GoldenOptions, GoldenReference, GoldenSampler, GOLDEN_AGREEMENT};
pub use metrics::{
    default_grid, iris, kde_bandwidth, kde_marginals, marginal_accuracy, median, GridDensity, MIN_KDE_ESS,
};
pub use runner::{
    load_dataset, run_benchmark, scenario_target, write_report, BenchConfig, BenchReport, BenchTimings, Budget, Cell,
    CostModel, GoldenConfig, GoldenSummary, Method, Scenario, Summary,
};
