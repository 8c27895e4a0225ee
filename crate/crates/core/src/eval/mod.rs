//! Metrics and experiment drivers: grid MSE against the noiseless response,
//! slope (CATE) bias, Student-t intervals across seeds, and method
//! comparisons between the modal ensemble and its baselines.

mod compare;
mod grid;
mod metrics;
mod report;

pub use compare::{
    comparison_split, fit_joint, run_comparison, sensitivity_sweep, ComparisonConfig, Method, MethodResult, Scoring,
};
pub use grid::{build_grid, Bounds, EvalGrid, GridRow, GridSpec};
pub use metrics::{cate_abs_bias, confidence_interval, grid_predictions, grid_truth, mse_on_grid, mse_tables};
pub use report::{
    plot_csv, records_from, results_csv, write_results_csv, ExperimentReport, PlotPoint, ReportRow, ResultRecord,
};
