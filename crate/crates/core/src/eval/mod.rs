//! Metrics, significance tests, the rolling-window experiment protocol and
//! report files.

pub mod experiment;
pub mod metrics;
pub mod report;
pub mod stats;

pub use experiment::{
    compute_importance, importance_seed, importance_training_set, run_cell, run_experiment, run_grid, score, summarize,
    DatasetVariant, ForecastRecord, GridConfig, GridOutput, ImportanceConfig, ImportanceReport, RunResult, Stock,
    StockSummary,
};
pub use metrics::{error_reduction_pct, mean_std, rmse, rrmse, running_rmse, RunningRmse};
pub use report::{sci4, volume_profile, StockInfo, SummaryRow, VolumeProfileRow};
pub use stats::{conover_posthoc, friedman_test, rank_rows, FriedmanResult, SignificanceReport};
