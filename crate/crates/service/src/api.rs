//! Versioned JSON bodies of the HTTP API.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use hnam_core::data::SeriesKey;
use hnam_core::model::{ComposedForecast, CovariateSpec, HnamConfig};
use serde::{Deserialize, Serialize};

use crate::adjust::Adjustment;
use crate::error::{ErrorClass, Result, ServiceError};
use crate::scenario::Override;

pub const API_VERSION: u32 = 1;

pub fn check_version(v: u32) -> Result<()> {
    if v == API_VERSION {
        Ok(())
    } else {
        Err(ServiceError::new(
            ErrorClass::UnsupportedVersion,
            format!("API version {v} not supported; expected {API_VERSION}"),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecastRequest {
    pub v: u32,
    pub series: SeriesKey,
    pub origin: NaiveDate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WhatIfRequest {
    pub v: u32,
    pub series: SeriesKey,
    pub origin: NaiveDate,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustRequest {
    pub v: u32,
    pub forecast_id: String,
    pub adjustment: Adjustment,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastResponse {
    pub v: u32,
    pub id: String,
    pub series: SeriesKey,
    pub origin: NaiveDate,
    pub dates: Vec<NaiveDate>,
    pub overrides: Vec<Override>,
    /// Current state, adjustments applied.
    pub forecast: ComposedForecast,
    /// Unadjusted forecast, present once adjustments exist.
    pub original: Option<ComposedForecast>,
    pub adjustments: Vec<Adjustment>,
    /// Observed sales over the horizon; `None` on gap days.
    pub actuals: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaResponse {
    pub v: u32,
    pub snapshot: String,
    pub config: HnamConfig,
    /// Causal covariates, lowest rank first.
    pub hierarchy: Vec<String>,
    pub covariates: Vec<CovariateSpec>,
    /// Category labels by covariate; index `i` is raw value `i`.
    pub vocabularies: BTreeMap<String, Vec<String>>,
    pub start: NaiveDate,
    pub n_days: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub series: SeriesKey,
    pub first_origin: Option<NaiveDate>,
    pub last_origin: Option<NaiveDate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesResponse {
    pub v: u32,
    pub series: Vec<SeriesEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorResponse {
    pub v: u32,
    pub error: ErrorClass,
    pub message: String,
}
