use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::baselines::{holt_winters_fit, holt_winters_forecast, seasonal_naive, WEEK};
use super::metrics::{population_std, rmse, smape, standardized_errors, truncate};
use crate::data::{split_train_val, SampleStore, SeriesFeatures, SeriesKey};
use crate::error::{CoreError, Result};
use crate::model::{ComposedForecast, HnamModel};
use crate::train::{finetune, TrainConfig, TrainLog};

/// Consecutive forecast origins sharing one fitted model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestPeriod {
    pub index: usize,
    /// Day indices of the forecast origins; the first is the test start.
    pub origins: Range<usize>,
}

impl TestPeriod {
    pub fn start(&self) -> usize {
        self.origins.start
    }
}

/// `count` back-to-back periods of `length` origins, the last ending at the
/// final origin whose horizon fits in `n_days`.
pub fn test_periods(
    n_days: usize,
    horizon: usize,
    count: usize,
    length: usize,
) -> Result<Vec<TestPeriod>> {
    let end = (n_days + 1).checked_sub(horizon).ok_or_else(|| {
        CoreError::InsufficientData(format!("{n_days} days cannot hold horizon {horizon}"))
    })?;
    let first = end.checked_sub(count * length).ok_or_else(|| {
        CoreError::InsufficientData(format!(
            "{n_days} days cannot hold {count} periods of {length}"
        ))
    })?;
    Ok((0..count)
        .map(|i| TestPeriod {
            index: i,
            origins: first + i * length..first + (i + 1) * length,
        })
        .collect())
}

/// One forecast from one origin, untruncated.
#[derive(Clone, Debug, PartialEq)]
pub struct ForecastCell {
    pub prediction: Vec<f64>,
    pub decomposition: Option<ComposedForecast>,
}

pub trait Forecaster {
    fn name(&self) -> &str;

    /// Called once before the origins of `period` are forecast.
    fn prepare(&mut self, _store: &SampleStore, _period: &TestPeriod) -> Result<()> {
        Ok(())
    }

    /// Forecasts for every origin in `origins`, in order.
    fn forecast(
        &self,
        store: &SampleStore,
        series: &SeriesFeatures,
        origins: &[usize],
    ) -> Result<Vec<ForecastCell>>;
}

pub struct SeasonalNaive {
    pub horizon: usize,
}

impl Forecaster for SeasonalNaive {
    fn name(&self) -> &str {
        "seasonal_naive"
    }

    fn forecast(
        &self,
        _: &SampleStore,
        series: &SeriesFeatures,
        origins: &[usize],
    ) -> Result<Vec<ForecastCell>> {
        origins
            .iter()
            .map(|&o| {
                Ok(ForecastCell {
                    prediction: seasonal_naive(&series.sales[..o], WEEK, self.horizon)?,
                    decomposition: None,
                })
            })
            .collect()
    }
}

/// Refit at every origin on all sales before it.
pub struct HoltWintersBaseline {
    pub horizon: usize,
}

impl Forecaster for HoltWintersBaseline {
    fn name(&self) -> &str {
        "holt_winters"
    }

    fn forecast(
        &self,
        _: &SampleStore,
        series: &SeriesFeatures,
        origins: &[usize],
    ) -> Result<Vec<ForecastCell>> {
        origins
            .iter()
            .map(|&o| {
                let fit = holt_winters_fit(&series.sales[..o], WEEK)?;
                Ok(ForecastCell {
                    prediction: holt_winters_forecast(&fit, self.horizon),
                    decomposition: None,
                })
            })
            .collect()
    }
}

/// A trained model, optionally fine-tuned ahead of every period it was not
/// already fitted for.
pub struct HnamForecaster {
    pub model: HnamModel,
    /// Test start the current parameters were fitted for.
    pub fitted_for: Option<usize>,
    pub finetune: Option<TrainConfig>,
    pub logs: Vec<(usize, TrainLog)>,
}

impl HnamForecaster {
    pub fn new(model: HnamModel, fitted_for: Option<usize>, finetune: Option<TrainConfig>) -> Self {
        Self {
            model,
            fitted_for,
            finetune,
            logs: Vec::new(),
        }
    }
}

impl Forecaster for HnamForecaster {
    fn name(&self) -> &str {
        "hnam"
    }

    fn prepare(&mut self, store: &SampleStore, period: &TestPeriod) -> Result<()> {
        let Some(cfg) = &self.finetune else {
            return Ok(());
        };
        if self.fitted_for == Some(period.start()) {
            return Ok(());
        }
        let (train, val) = split_train_val(
            store.series(),
            store.covariates(),
            store.plan(),
            period.start(),
        )?;
        let (model, log) = finetune(&self.model, store.covariates(), &train, &val, cfg)?;
        log::info!(
            "period {}: fine-tuned, best epoch {} val {:.6}",
            period.index,
            log.best_epoch,
            log.best_val_loss
        );
        self.model = model;
        self.fitted_for = Some(period.start());
        self.logs.push((period.index, log));
        Ok(())
    }

    fn forecast(
        &self,
        store: &SampleStore,
        series: &SeriesFeatures,
        origins: &[usize],
    ) -> Result<Vec<ForecastCell>> {
        let samples = origins
            .iter()
            .map(|&o| store.sample_at(&series.key, o))
            .collect::<Result<Vec<_>>>()?;
        let bundles: Vec<_> = samples.iter().map(|s| &s.bundle).collect();
        Ok(self
            .model
            .forecast_batch(&bundles)?
            .into_iter()
            .map(|fc| ForecastCell {
                prediction: fc.prediction.clone(),
                decomposition: Some(fc),
            })
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub series: SeriesKey,
    pub model: String,
    pub smape: f64,
    pub std_mae: f64,
    pub std_rmse: f64,
    pub rmse: f64,
    pub n_forecasts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub model: String,
    pub mean: [f64; 3],
    pub median: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankFrequency {
    pub model: String,
    /// Percent of series where the model ranks first / second by RMSE.
    pub first: f64,
    pub second: f64,
}

/// A decomposed forecast with the actuals it is scored against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub model: String,
    pub series: SeriesKey,
    pub origin: chrono::NaiveDate,
    pub period: usize,
    pub actuals: Vec<f64>,
    pub forecast: ComposedForecast,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Model order used for tie-breaking.
    pub models: Vec<String>,
    pub rows: Vec<MetricRow>,
    pub aggregates: Vec<Aggregate>,
    pub ranks: Vec<RankFrequency>,
    /// Series where two models share an RMSE.
    pub ties: usize,
    /// Series with zero target variation, left out of every table.
    pub excluded: Vec<SeriesKey>,
    pub decompositions: Vec<DecompositionRecord>,
}

pub const METRIC_NAMES: [&str; 3] = ["smape", "std_mae", "std_rmse"];

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

impl EvalReport {
    pub fn row(&self, model: &str, series: &SeriesKey) -> Option<&MetricRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && &r.series == series)
    }

    pub fn aggregate(&self, model: &str) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.model == model)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "product_id",
            "store_id",
            "model",
            "smape",
            "std_mae",
            "std_rmse",
            "rmse",
            "n_forecasts",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.series.product_id.clone(),
                r.series.store_id.clone(),
                r.model.clone(),
                r.smape.to_string(),
                r.std_mae.to_string(),
                r.std_rmse.to_string(),
                r.rmse.to_string(),
                r.n_forecasts.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Mean and median per metric, then first/second rank frequencies.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let n_series = self
            .rows
            .iter()
            .map(|r| &r.series)
            .collect::<BTreeSet<_>>()
            .len();
        let _ = writeln!(
            s,
            "series evaluated: {n_series}, excluded (zero std): {}",
            self.excluded.len()
        );
        let _ = write!(s, "{:<16}", "model");
        for m in METRIC_NAMES {
            let _ = write!(s, " {:>12} {:>12}", format!("{m} mean"), format!("{m} med"));
        }
        let _ = writeln!(s, " {:>8} {:>8}", "1st %", "2nd %");
        for (a, r) in self.aggregates.iter().zip(&self.ranks) {
            let _ = write!(s, "{:<16}", a.model);
            for k in 0..3 {
                let _ = write!(s, " {:>12.4} {:>12.4}", a.mean[k], a.median[k]);
            }
            let _ = writeln!(s, " {:>8.1} {:>8.1}", r.first, r.second);
        }
        let _ = writeln!(
            s,
            "ranking by per-series RMSE; {} tie(s) broken by model order: {}",
            self.ties,
            self.models.join(", ")
        );
        s
    }

    pub fn write_decompositions<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for d in &self.decompositions {
            serde_json::to_writer(&mut out, d)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Forecasts every origin of every period with every model, truncates at
/// zero and scores the pooled cells per series. Models are ranked in name
/// order when tied.
pub fn rolling_evaluate(
    store: &SampleStore,
    periods: &[TestPeriod],
    models: &mut [&mut dyn Forecaster],
    keep_decompositions: bool,
) -> Result<EvalReport> {
    let horizon = store.plan().horizon;
    let mut names: Vec<String> = models.iter().map(|m| m.name().to_string()).collect();
    if names.iter().collect::<BTreeSet<_>>().len() != names.len() {
        return Err(CoreError::Evaluation("model names must be unique".into()));
    }
    // (model, series) -> (actuals, truncated predictions, points)
    type Cell = (Vec<f64>, Vec<f64>, usize);
    let mut cells: BTreeMap<(String, SeriesKey), Cell> = BTreeMap::new();
    let mut decompositions = Vec::new();
    for period in periods {
        let origins: Vec<usize> = period.origins.clone().collect();
        for model in models.iter_mut() {
            model.prepare(store, period)?;
            for series in store.series() {
                if let Some(&o) = origins.iter().find(|&&o| o + horizon > series.len()) {
                    return Err(CoreError::Evaluation(format!(
                        "{}: origin {o} has no complete target",
                        series.key
                    )));
                }
                let out = model.forecast(store, series, &origins)?;
                if out.len() != origins.len() {
                    return Err(CoreError::Evaluation(format!(
                        "{} returned {} forecasts for {} origins of {}",
                        model.name(),
                        out.len(),
                        origins.len(),
                        series.key
                    )));
                }
                let entry = cells
                    .entry((model.name().to_string(), series.key.clone()))
                    .or_default();
                for (&o, cell) in origins.iter().zip(out) {
                    if cell.prediction.len() != horizon
                        || cell.prediction.iter().any(|v| !v.is_finite())
                    {
                        return Err(CoreError::Evaluation(format!(
                            "{} produced an incomplete forecast for {} at day {o}",
                            model.name(),
                            series.key
                        )));
                    }
                    let actuals = &series.sales[o..o + horizon];
                    entry.0.extend_from_slice(actuals);
                    entry.1.extend(truncate(&cell.prediction));
                    entry.2 += 1;
                    if keep_decompositions {
                        if let Some(forecast) = cell.decomposition {
                            decompositions.push(DecompositionRecord {
                                model: model.name().to_string(),
                                series: series.key.clone(),
                                origin: crate::data::records::date_at(store.plan().start, o),
                                period: period.index,
                                actuals: actuals.to_vec(),
                                forecast,
                            });
                        }
                    }
                }
            }
        }
    }
    let mut days: BTreeSet<usize> = BTreeSet::new();
    for p in periods {
        for o in p.origins.clone() {
            days.extend(o..o + horizon);
        }
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for series in store.series() {
        let target: Vec<f64> = days.iter().map(|&d| series.sales[d]).collect();
        let std = population_std(&target);
        if !(std > 0.0) {
            log::warn!(
                "{}: zero target std over the test periods; excluded",
                series.key
            );
            excluded.push(series.key.clone());
            continue;
        }
        for name in &names {
            let (y, f, n) = &cells[&(name.clone(), series.key.clone())];
            let (std_mae, std_rmse) = standardized_errors(y, f, std)?;
            rows.push(MetricRow {
                series: series.key.clone(),
                model: name.clone(),
                smape: smape(y, f)?,
                std_mae,
                std_rmse,
                rmse: rmse(y, f)?,
                n_forecasts: *n,
            });
        }
    }
    let sorted_names = {
        names.sort();
        names.clone()
    };
    let aggregates = sorted_names
        .iter()
        .map(|name| {
            let of = |k: usize| -> Vec<f64> {
                rows.iter()
                    .filter(|r| &r.model == name)
                    .map(|r| [r.smape, r.std_mae, r.std_rmse][k])
                    .collect()
            };
            let mut mean = [0.0; 3];
            let mut med = [0.0; 3];
            for k in 0..3 {
                let mut v = of(k);
                mean[k] = v.iter().sum::<f64>() / v.len().max(1) as f64;
                med[k] = median(&mut v);
            }
            Aggregate {
                model: name.clone(),
                mean,
                median: med,
            }
        })
        .collect();
    let mut first: BTreeMap<&str, usize> = BTreeMap::new();
    let mut second: BTreeMap<&str, usize> = BTreeMap::new();
    let mut ties = 0;
    let mut n_ranked = 0;
    for series in store.series().iter().filter(|s| !excluded.contains(&s.key)) {
        let mut ranked: Vec<&MetricRow> = rows.iter().filter(|r| r.series == series.key).collect();
        ranked.sort_by(|a, b| {
            a.rmse
                .total_cmp(&b.rmse)
                .then_with(|| a.model.cmp(&b.model))
        });
        if ranked.windows(2).any(|w| w[0].rmse == w[1].rmse) {
            ties += 1;
        }
        n_ranked += 1;
        *first.entry(ranked[0].model.as_str()).or_default() += 1;
        if let Some(r) = ranked.get(1) {
            *second.entry(r.model.as_str()).or_default() += 1;
        }
    }
    let pct = |c: Option<&usize>| 100.0 * *c.unwrap_or(&0) as f64 / n_ranked.max(1) as f64;
    let ranks = sorted_names
        .iter()
        .map(|n| RankFrequency {
            model: n.clone(),
            first: pct(first.get(n.as_str())),
            second: pct(second.get(n.as_str())),
        })
        .collect();
    Ok(EvalReport {
        models: sorted_names,
        rows,
        aggregates,
        ranks,
        ties,
        excluded,
        decompositions,
    })
}
