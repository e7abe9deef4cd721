use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::features::{window_position, FeaturePlan, SeriesFeatures, WINDOW_POSITION};
use super::records::{date_at, SeriesKey};
use crate::error::{CoreError, Result};
use crate::model::{CovariateBundle, CovariateKind, CovariateSet};

/// Days between the validation block and the first test day.
pub const VALIDATION_DAYS: usize = 14;

/// One forecasting sample: covariates for `[origin - history, origin +
/// horizon)` and the actual sales over the horizon.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSample {
    pub series: SeriesKey,
    pub origin: NaiveDate,
    pub origin_index: usize,
    pub bundle: CovariateBundle,
    pub target: Vec<f64>,
    /// Horizon steps that may be used for fitting or validation.
    pub target_mask: Vec<bool>,
}

impl WindowSample {
    /// Masks out horizon steps on or after day index `end`.
    pub fn mask_from(&mut self, end: usize) {
        for (h, m) in self.target_mask.iter_mut().enumerate() {
            if self.origin_index + h >= end {
                *m = false;
            }
        }
    }
}

pub fn origin_is_valid(
    features: &SeriesFeatures,
    origin: usize,
    history: usize,
    horizon: usize,
) -> bool {
    origin >= history && origin + horizon <= features.len()
}

/// Builds the sample at day index `origin`. Past values come from days
/// before `origin` only; `scale` is one plus the mean history sales.
pub fn make_window(
    features: &SeriesFeatures,
    set: &CovariateSet,
    plan: &FeaturePlan,
    origin: usize,
) -> Result<WindowSample> {
    let (history, horizon) = (plan.history, plan.horizon);
    if !origin_is_valid(features, origin, history, horizon) {
        return Err(CoreError::OriginNotFound {
            series: features.key.to_string(),
            origin: date_at(plan.start, origin).to_string(),
        });
    }
    let span = origin - history..origin + horizon;
    let scale = 1.0 + features.sales[origin - history..origin].iter().sum::<f64>() / history as f64;
    let mut bundle = CovariateBundle {
        history,
        horizon,
        statics: Vec::new(),
        non_causal: Vec::new(),
        past: Vec::new(),
        causal: Vec::new(),
        scale,
    };
    for spec in set.specs() {
        let row: Vec<f64> = match spec.kind {
            CovariateKind::Past => {
                let source = if spec.name == super::features::SALES {
                    &features.sales[span.clone()]
                } else {
                    &features.column(&spec.name)?[span.clone()]
                };
                let divisor = if spec.name == super::features::SALES {
                    scale
                } else {
                    1.0
                };
                (0..history + horizon)
                    .map(|p| {
                        if p < history {
                            source[p] / divisor
                        } else {
                            0.0
                        }
                    })
                    .collect()
            }
            _ if spec.name == WINDOW_POSITION => (0..history + horizon)
                .map(|p| window_position(p, history, horizon))
                .collect(),
            _ => features.column(&spec.name)?[span.clone()].to_vec(),
        };
        bundle.rows_mut(spec.kind).push(row);
    }
    Ok(WindowSample {
        series: features.key.clone(),
        origin: date_at(plan.start, origin),
        origin_index: origin,
        bundle,
        target: features.sales[origin..origin + horizon].to_vec(),
        target_mask: vec![true; horizon],
    })
}

/// Samples at every valid origin in `origins`.
pub fn make_windows(
    features: &SeriesFeatures,
    set: &CovariateSet,
    plan: &FeaturePlan,
    origins: std::ops::Range<usize>,
) -> Result<Vec<WindowSample>> {
    let valid: Vec<usize> = origins
        .filter(|&o| origin_is_valid(features, o, plan.history, plan.horizon))
        .collect();
    if valid.is_empty() {
        log::warn!(
            "{}: not enough history for any window; skipped",
            features.key
        );
    }
    valid
        .into_iter()
        .map(|o| make_window(features, set, plan, o))
        .collect()
}

/// Origins for fitting before a test block starting at day `test_start`:
/// validation origins are the 14 days before it, training origins end 14
/// days earlier. Targets are masked so that training never sees a
/// validation origin's day and validation never sees a test day.
pub fn split_origins(
    test_start: usize,
    history: usize,
) -> Result<(std::ops::Range<usize>, std::ops::Range<usize>)> {
    if test_start < history + VALIDATION_DAYS + 1 {
        return Err(CoreError::InsufficientData(format!(
            "test start day {test_start} leaves no training origin with history {history}"
        )));
    }
    let val_start = test_start - VALIDATION_DAYS;
    Ok((history..val_start, val_start..test_start))
}

/// Training and validation samples for all `series` ahead of the test
/// block starting at day `test_start`.
pub fn split_train_val(
    series: &[SeriesFeatures],
    set: &CovariateSet,
    plan: &FeaturePlan,
    test_start: usize,
) -> Result<(Vec<WindowSample>, Vec<WindowSample>)> {
    let (train_range, val_range) = split_origins(test_start, plan.history)?;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for f in series {
        for mut s in make_windows(f, set, plan, train_range.clone())? {
            s.mask_from(val_range.start);
            train.push(s);
        }
        for mut s in make_windows(f, set, plan, val_range.clone())? {
            s.mask_from(test_start);
            val.push(s);
        }
    }
    if train.is_empty() || val.is_empty() {
        return Err(CoreError::InsufficientData(format!(
            "split at day {test_start} yields {} training and {} validation samples",
            train.len(),
            val.len()
        )));
    }
    Ok((train, val))
}
