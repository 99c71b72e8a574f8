//! Out-of-sample evaluation: walk-forward backtests, error metrics and
//! Diebold–Mariano comparisons.

mod backtest;
mod dm;
mod metrics;

pub use backtest::{rolling_backtest, Backtest, FitEvent, Forecaster, GarchForecaster, HarForecaster, HybridForecaster, Scheme};
pub use dm::{dm_test, rejection_heatmap, DmConfig, DmResult, LongRunVariance, RejectionHeatmap};
pub use metrics::{error_table, metrics, metrics_by_model, ErrorTable, ForecastRecord, MetricReport};
