//! The value transformation applied to causal covariates before they
//! multiply their coefficients: `k-1` one-hot for categoricals, training
//! standardization for continuous values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::covariates::{CovariateBundle, CovariateKind, CovariateSet, CovariateSpec, DType};
use crate::error::{CoreError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.mean) / self.std
    }
}

/// Per-covariate standardization statistics for every continuous input.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TransformStats {
    pub continuous: BTreeMap<String, Standardization>,
}

impl TransformStats {
    /// Fits mean and population std of every continuous covariate over the
    /// given (training) bundles. Past covariates contribute history columns
    /// only.
    pub fn fit<'a>(
        set: &CovariateSet,
        bundles: impl IntoIterator<Item = &'a CovariateBundle>,
    ) -> Result<Self> {
        let continuous: Vec<(usize, &CovariateSpec)> = set
            .specs()
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_categorical())
            .collect();
        // (sum, sum of squares, count) with a shifted origin per covariate
        let mut acc: Vec<Option<(f64, f64, f64, f64)>> = vec![None; continuous.len()];
        for bundle in bundles {
            for (slot, (_, spec)) in acc.iter_mut().zip(&continuous) {
                let row = row_of(set, bundle, &spec.name);
                let cols = if spec.kind == CovariateKind::Past {
                    &row[..bundle.history]
                } else {
                    row
                };
                for &v in cols {
                    let (shift, s, ss, n) = slot.get_or_insert((v, 0.0, 0.0, 0.0));
                    let dv = v - *shift;
                    *s += dv;
                    *ss += dv * dv;
                    *n += 1.0;
                }
            }
        }
        let mut out = BTreeMap::new();
        for (slot, (_, spec)) in acc.into_iter().zip(&continuous) {
            let Some((shift, s, ss, n)) = slot else {
                return Err(CoreError::InsufficientData(format!(
                    "no training values for `{}`",
                    spec.name
                )));
            };
            let mean_d = s / n;
            let var = (ss / n - mean_d * mean_d).max(0.0);
            let std = var.sqrt();
            if !(std > 1e-12) {
                return Err(CoreError::ZeroStd(spec.name.clone()));
            }
            out.insert(
                spec.name.clone(),
                Standardization {
                    mean: shift + mean_d,
                    std,
                },
            );
        }
        Ok(Self { continuous: out })
    }

    pub fn get(&self, name: &str) -> Result<Standardization> {
        self.continuous
            .get(name)
            .copied()
            .ok_or_else(|| CoreError::Covariate {
                name: name.to_string(),
                message: "no fitted standardization".into(),
            })
    }
}

fn row_of<'b>(set: &CovariateSet, bundle: &'b CovariateBundle, name: &str) -> &'b [f64] {
    let spec = set.get(name).expect("covariate in set");
    let pos = set
        .of_kind(spec.kind)
        .position(|s| s.name == name)
        .expect("covariate in kind");
    &bundle.rows(spec.kind)[pos]
}

/// Transforms one causal covariate's horizon values into `T_f` vectors of
/// width 1 (continuous) or `k - 1` (categorical).
pub fn transform_values(
    spec: &CovariateSpec,
    values: &[f64],
    stats: &TransformStats,
) -> Result<Vec<Vec<f64>>> {
    match spec.dtype {
        DType::Categorical { cardinality } => values
            .iter()
            .map(|&v| {
                if v < 0.0 || v.fract() != 0.0 || v as usize >= cardinality {
                    return Err(CoreError::Covariate {
                        name: spec.name.clone(),
                        message: format!("category {v} outside 0..{cardinality}"),
                    });
                }
                let mut one_hot = vec![0.0; cardinality - 1];
                if v as usize > 0 {
                    one_hot[v as usize - 1] = 1.0;
                }
                Ok(one_hot)
            })
            .collect(),
        DType::Continuous => {
            let st = stats.get(&spec.name)?;
            Ok(values.iter().map(|&v| vec![st.apply(v)]).collect())
        }
    }
}

/// Applies [`transform_values`] to the horizon columns of every causal row.
pub fn transform_t(
    set: &CovariateSet,
    bundle: &CovariateBundle,
    stats: &TransformStats,
) -> Result<Vec<Vec<Vec<f64>>>> {
    set.causal()
        .iter()
        .zip(&bundle.causal)
        .map(|(spec, row)| transform_values(spec, &row[bundle.history..], stats))
        .collect()
}
