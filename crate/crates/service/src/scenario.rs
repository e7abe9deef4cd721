//! What-if scenarios: raw-value overrides of causal covariates.

use chrono::NaiveDate;
use hnam_core::data::SeriesKey;
use hnam_core::model::{CovariateBundle, CovariateSet, DType};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ErrorClass, Result, ServiceError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Override {
    pub covariate: String,
    /// Horizon step in `[0, horizon)`.
    pub step: usize,
    /// Raw value: category index for categorical covariates.
    pub value: f64,
}

/// Everything a forecast is computed from, apart from the snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForecastSource {
    pub series: SeriesKey,
    /// First forecast day.
    pub origin: NaiveDate,
    #[serde(default)]
    pub overrides: Vec<Override>,
}

impl ForecastSource {
    /// Content hash of the snapshot hash, series, origin and the overrides
    /// in canonical order.
    pub fn id(&self, snapshot_hash: &str) -> String {
        let mut overrides = self.overrides.clone();
        overrides.sort_by(|a, b| (&a.covariate, a.step).cmp(&(&b.covariate, b.step)));
        let canonical = serde_json::json!({
            "snapshot": snapshot_hash,
            "series": self.series,
            "origin": self.origin,
            "overrides": overrides,
        });
        hex::encode(Sha256::digest(canonical.to_string().as_bytes()))
    }
}

fn invalid(message: String) -> ServiceError {
    ServiceError::new(ErrorClass::InvalidScenario, message)
}

/// Checks overrides against the causal schema and horizon.
pub fn validate_overrides(
    set: &CovariateSet,
    horizon: usize,
    overrides: &[Override],
) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for o in overrides {
        let spec = set
            .causal()
            .into_iter()
            .find(|s| s.name == o.covariate)
            .ok_or_else(|| invalid(format!("`{}` is not a causal covariate", o.covariate)))?;
        if o.step >= horizon {
            return Err(invalid(format!(
                "step {} outside horizon {horizon}",
                o.step
            )));
        }
        if !o.value.is_finite() {
            return Err(invalid(format!("override value {} is not finite", o.value)));
        }
        if let DType::Categorical { cardinality } = spec.dtype {
            if o.value.fract() != 0.0 || o.value < 0.0 || o.value >= cardinality as f64 {
                return Err(invalid(format!(
                    "`{}` takes category indices 0..{cardinality}, got {}",
                    o.covariate, o.value
                )));
            }
        }
        if !seen.insert((&o.covariate, o.step)) {
            return Err(invalid(format!(
                "duplicate override of `{}` at step {}",
                o.covariate, o.step
            )));
        }
    }
    Ok(())
}

/// Writes the overrides into the future part of the causal rows.
pub fn apply_overrides(
    bundle: &mut CovariateBundle,
    set: &CovariateSet,
    overrides: &[Override],
) -> Result<()> {
    validate_overrides(set, bundle.horizon, overrides)?;
    for o in overrides {
        let i = set.causal_index(&o.covariate).expect("validated");
        bundle.causal[i][bundle.history + o.step] = o.value;
    }
    Ok(())
}
