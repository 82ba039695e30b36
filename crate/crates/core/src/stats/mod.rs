//! Leakage statistics: cell summaries, slope and rank correlation,
//! bootstrap intervals, factorial variance and condition comparison.

mod bootstrap;
mod factorial;
mod regression;
mod report;
mod summary;

pub use bootstrap::{
    bootstrap_detail, bootstrap_slope, design_aware_bootstrap, percentile, pool_factorial,
    BootstrapDetail, BootstrapMode, FactorialCell, SlopeResult, DEFAULT_RESAMPLES,
};
pub use factorial::{factor_slopes, variance_decomposition, FactorSlopes, VarianceRow};
pub use regression::{average_ranks, ols_slope, spearman_rho};
pub use report::{
    compare_conditions, write_cell_table, write_comparison, write_plot_data, write_summary_table,
    write_variance_table, Comparison, ComparisonRow, ConditionMetrics, FactorialMetrics,
    MetricsReport, VariantMetrics,
};
pub use summary::{group_cells, sample_sd, summarize, summarize_cells, within_25, CellData, CellSummary};
