//! Metrics, statistical baselines and rolling-origin evaluation.

pub mod baselines;
pub mod metrics;
pub mod rolling;

pub use baselines::{
    holt_winters_fit, holt_winters_forecast, one_step_sse, seasonal_naive, EtsParams, HoltWinters,
};
pub use metrics::{mae, population_std, rmse, smape, standardized_errors, truncate};
pub use rolling::{
    rolling_evaluate, test_periods, EvalReport, ForecastCell, Forecaster, HnamForecaster,
    HoltWintersBaseline, MetricRow, SeasonalNaive, TestPeriod,
};
