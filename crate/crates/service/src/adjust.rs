//! Judgmental adjustments of single forecast components and their
//! append-only log.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use hnam_core::model::ComposedForecast;
use serde::{Deserialize, Serialize};

use crate::error::{ErrorClass, Result, ServiceError};
use crate::scenario::ForecastSource;

/// Target name addressing the level instead of a covariate effect.
pub const LEVEL: &str = "level";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjustmentKind {
    /// Per-step deltas added to the component.
    Add,
    /// Per-step factors multiplying the component.
    Scale,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Adjustment {
    /// `"level"` or a causal covariate name.
    pub target: String,
    pub kind: AdjustmentKind,
    /// One value per horizon step.
    pub values: Vec<f64>,
    #[serde(default)]
    pub author: String,
    #[serde(default)]
    pub timestamp: Option<DateTime<Utc>>,
    #[serde(default)]
    pub note: String,
}

fn invalid(message: String) -> ServiceError {
    ServiceError::new(ErrorClass::InvalidAdjustment, message)
}

/// Applies `adjustment` to a copy of `forecast` and recomposes it.
pub fn recompose(forecast: &ComposedForecast, adjustment: &Adjustment) -> Result<ComposedForecast> {
    let horizon = forecast.horizon();
    if adjustment.values.len() != horizon {
        return Err(invalid(format!(
            "{} adjustment values for horizon {horizon}",
            adjustment.values.len()
        )));
    }
    if let Some(v) = adjustment.values.iter().find(|v| !v.is_finite()) {
        return Err(invalid(format!("adjustment value {v} is not finite")));
    }
    let mut out = forecast.clone();
    let row = if adjustment.target == LEVEL {
        &mut out.level
    } else {
        let i = out
            .covariates
            .iter()
            .position(|c| *c == adjustment.target)
            .ok_or_else(|| invalid(format!("unknown adjustment target `{}`", adjustment.target)))?;
        &mut out.effects[i]
    };
    for (x, v) in row.iter_mut().zip(&adjustment.values) {
        match adjustment.kind {
            AdjustmentKind::Add => *x += v,
            AdjustmentKind::Scale => *x *= v,
        }
    }
    out.recompose();
    Ok(out)
}

/// One line of the adjustment log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub v: u32,
    pub seq: u64,
    pub forecast_id: String,
    pub source: ForecastSource,
    pub adjustment: Adjustment,
}

/// Line-delimited JSON log. Records are only ever appended; the in-memory
/// copy mirrors the file.
#[derive(Debug, Default)]
pub struct AdjustmentLog {
    path: Option<PathBuf>,
    records: Vec<LogRecord>,
}

impl AdjustmentLog {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens or creates the log at `path`, loading existing records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut records = Vec::new();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: LogRecord = serde_json::from_str(&line).map_err(|e| {
                    ServiceError::new(
                        ErrorClass::Data,
                        format!("{}:{}: {e}", path.display(), i + 1),
                    )
                })?;
                records.push(rec);
            }
        }
        Ok(Self {
            path: Some(path),
            records,
        })
    }

    pub fn records(&self) -> &[LogRecord] {
        &self.records
    }

    pub fn for_forecast<'a>(&'a self, id: &'a str) -> impl Iterator<Item = &'a Adjustment> + 'a {
        self.records
            .iter()
            .filter(move |r| r.forecast_id == id)
            .map(|r| &r.adjustment)
    }

    /// Appends and flushes one record; returns its sequence number.
    pub fn append(
        &mut self,
        forecast_id: &str,
        source: &ForecastSource,
        adjustment: Adjustment,
    ) -> Result<u64> {
        let rec = LogRecord {
            v: crate::api::API_VERSION,
            seq: self.records.len() as u64,
            forecast_id: forecast_id.to_string(),
            source: source.clone(),
            adjustment,
        };
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let line = serde_json::to_string(&rec)
                .map_err(|e| ServiceError::new(ErrorClass::Internal, e.to_string()))?;
            writeln!(f, "{line}")?;
            f.sync_data()?;
        }
        let seq = rec.seq;
        self.records.push(rec);
        Ok(seq)
    }
}

/// Applies adjustments in order over `base`.
pub fn apply_all<'a>(
    base: &ComposedForecast,
    adjustments: impl IntoIterator<Item = &'a Adjustment>,
) -> Result<ComposedForecast> {
    let mut current = base.clone();
    for adj in adjustments {
        current = recompose(&current, adj)?;
    }
    Ok(current)
}

/// Final adjusted state of every forecast named in `records`, computing
/// each original with `base`.
pub fn replay(
    records: &[LogRecord],
    mut base: impl FnMut(&ForecastSource) -> Result<ComposedForecast>,
) -> Result<BTreeMap<String, ComposedForecast>> {
    let mut states: BTreeMap<String, ComposedForecast> = BTreeMap::new();
    for rec in records {
        let current = match states.remove(&rec.forecast_id) {
            Some(f) => f,
            None => base(&rec.source)?,
        };
        states.insert(
            rec.forecast_id.clone(),
            recompose(&current, &rec.adjustment)?,
        );
    }
    Ok(states)
}
