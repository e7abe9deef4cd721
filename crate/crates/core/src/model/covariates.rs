use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Temporal availability of a covariate and whether it gets its own effect.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateKind {
    /// Known in past and future, with an individually estimated effect.
    Causal,
    /// Known in past and future, modulates effects only.
    NonCausal,
    /// Constant over the window.
    Static,
    /// Only observed in the history window.
    Past,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum DType {
    Categorical { cardinality: usize },
    Continuous,
}

impl DType {
    /// Width of the transformed value vector (`k - 1` for categoricals).
    pub fn transformed_width(self) -> usize {
        match self {
            DType::Categorical { cardinality } => cardinality - 1,
            DType::Continuous => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    pub kind: CovariateKind,
    pub dtype: DType,
    /// Position in the interaction hierarchy, causal covariates only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hierarchy_rank: Option<usize>,
}

impl CovariateSpec {
    pub fn categorical(name: &str, kind: CovariateKind, cardinality: usize) -> Self {
        Self {
            name: name.to_string(),
            kind,
            dtype: DType::Categorical { cardinality },
            hierarchy_rank: None,
        }
    }

    pub fn continuous(name: &str, kind: CovariateKind) -> Self {
        Self {
            name: name.to_string(),
            kind,
            dtype: DType::Continuous,
            hierarchy_rank: None,
        }
    }

    pub fn causal(name: &str, dtype: DType, rank: usize) -> Self {
        Self {
            name: name.to_string(),
            kind: CovariateKind::Causal,
            dtype,
            hierarchy_rank: Some(rank),
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.dtype, DType::Categorical { .. })
    }
}

/// Validated covariate list. Rows of a [`CovariateBundle`] follow
/// [`CovariateSet::of_kind`] order per kind; causal rows follow the
/// hierarchy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<CovariateSpec>", into = "Vec<CovariateSpec>")]
pub struct CovariateSet {
    specs: Vec<CovariateSpec>,
}

impl TryFrom<Vec<CovariateSpec>> for CovariateSet {
    type Error = CoreError;

    fn try_from(specs: Vec<CovariateSpec>) -> Result<Self> {
        Self::new(specs)
    }
}

impl From<CovariateSet> for Vec<CovariateSpec> {
    fn from(set: CovariateSet) -> Self {
        set.specs
    }
}

impl CovariateSet {
    pub fn new(mut specs: Vec<CovariateSpec>) -> Result<Self> {
        let bad = |name: &str, message: String| CoreError::Covariate {
            name: name.to_string(),
            message,
        };
        for (i, s) in specs.iter().enumerate() {
            if specs[..i].iter().any(|o| o.name == s.name) {
                return Err(bad(&s.name, "declared twice".into()));
            }
            if let DType::Categorical { cardinality } = s.dtype {
                if cardinality < 2 {
                    return Err(bad(&s.name, format!("cardinality {cardinality} < 2")));
                }
            }
            match (s.kind, s.hierarchy_rank) {
                (CovariateKind::Causal, None) => {
                    return Err(bad(
                        &s.name,
                        "causal covariate without hierarchy rank".into(),
                    ))
                }
                (k, Some(_)) if k != CovariateKind::Causal => {
                    return Err(bad(
                        &s.name,
                        "hierarchy rank on a non-causal covariate".into(),
                    ))
                }
                _ => {}
            }
        }
        let mut ranks: Vec<usize> = specs.iter().filter_map(|s| s.hierarchy_rank).collect();
        ranks.sort_unstable();
        if ranks.iter().enumerate().any(|(i, &r)| i != r) {
            return Err(CoreError::Config(format!(
                "hierarchy ranks must be unique and contiguous from 0, got {ranks:?}"
            )));
        }
        // Causal covariates sorted by rank; other kinds keep declaration order.
        specs.sort_by_key(|s| (kind_order(s.kind), s.hierarchy_rank.unwrap_or(0)));
        Ok(Self { specs })
    }

    pub fn specs(&self) -> &[CovariateSpec] {
        &self.specs
    }

    pub fn of_kind(&self, kind: CovariateKind) -> impl Iterator<Item = &CovariateSpec> {
        self.specs.iter().filter(move |s| s.kind == kind)
    }

    pub fn count(&self, kind: CovariateKind) -> usize {
        self.of_kind(kind).count()
    }

    /// Causal covariates ordered from lowest to highest in the hierarchy.
    pub fn causal(&self) -> Vec<&CovariateSpec> {
        self.of_kind(CovariateKind::Causal).collect()
    }

    pub fn hierarchy(&self) -> Vec<String> {
        self.causal().iter().map(|s| s.name.clone()).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CovariateSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    /// Rank of a causal covariate.
    pub fn causal_index(&self, name: &str) -> Option<usize> {
        self.get(name).and_then(|s| s.hierarchy_rank)
    }
}

fn kind_order(kind: CovariateKind) -> u8 {
    match kind {
        CovariateKind::Static => 0,
        CovariateKind::NonCausal => 1,
        CovariateKind::Past => 2,
        CovariateKind::Causal => 3,
    }
}

/// Covariate matrices for one forecasting window of `history + horizon`
/// steps. Categorical values are stored as category indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovariateBundle {
    pub history: usize,
    pub horizon: usize,
    /// S: one row per static covariate, constant along time.
    pub statics: Vec<Vec<f64>>,
    /// T: non-causal rows.
    pub non_causal: Vec<Vec<f64>>,
    /// P: past rows; columns at or after `history` are zero.
    pub past: Vec<Vec<f64>>,
    /// C: causal rows in hierarchy order, raw (untransformed) values.
    pub causal: Vec<Vec<f64>>,
    /// Target scale: past sales in P and the model output are in units of
    /// this factor.
    pub scale: f64,
}

impl CovariateBundle {
    pub fn len(&self) -> usize {
        self.history + self.horizon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self, kind: CovariateKind) -> &[Vec<f64>] {
        match kind {
            CovariateKind::Static => &self.statics,
            CovariateKind::NonCausal => &self.non_causal,
            CovariateKind::Past => &self.past,
            CovariateKind::Causal => &self.causal,
        }
    }

    pub fn rows_mut(&mut self, kind: CovariateKind) -> &mut Vec<Vec<f64>> {
        match kind {
            CovariateKind::Static => &mut self.statics,
            CovariateKind::NonCausal => &mut self.non_causal,
            CovariateKind::Past => &mut self.past,
            CovariateKind::Causal => &mut self.causal,
        }
    }

    /// Checks shapes against `set` and the structural invariants: shared
    /// time axis, constant static rows, zero future past-values, valid
    /// category indices.
    pub fn validate(&self, set: &CovariateSet) -> Result<()> {
        let t = self.len();
        if self.history == 0 || self.horizon == 0 {
            return Err(CoreError::Config("bundle needs history and horizon".into()));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(CoreError::Config(format!(
                "bundle scale {} not positive",
                self.scale
            )));
        }
        for kind in [
            CovariateKind::Static,
            CovariateKind::NonCausal,
            CovariateKind::Past,
            CovariateKind::Causal,
        ] {
            let specs: Vec<_> = set.of_kind(kind).collect();
            let rows = self.rows(kind);
            if rows.len() != specs.len() {
                return Err(CoreError::Config(format!(
                    "{kind:?}: bundle has {} rows, {} covariates declared",
                    rows.len(),
                    specs.len()
                )));
            }
            for (spec, row) in specs.iter().zip(rows) {
                let bad = |message: String| CoreError::Covariate {
                    name: spec.name.clone(),
                    message,
                };
                if row.len() != t {
                    return Err(bad(format!("row has {} columns, expected {t}", row.len())));
                }
                if kind == CovariateKind::Static && row.iter().any(|v| *v != row[0]) {
                    return Err(bad("static row varies over time".into()));
                }
                if kind == CovariateKind::Past && row[self.history..].iter().any(|v| *v != 0.0) {
                    return Err(bad("past covariate has non-zero future values".into()));
                }
                if let DType::Categorical { cardinality } = spec.dtype {
                    let past_only = kind == CovariateKind::Past;
                    for (i, &v) in row.iter().enumerate() {
                        if past_only && i >= self.history {
                            break;
                        }
                        if v < 0.0 || v.fract() != 0.0 || v as usize >= cardinality {
                            return Err(bad(format!(
                                "category {v} at step {i} outside 0..{cardinality}"
                            )));
                        }
                    }
                } else if row.iter().any(|v| !v.is_finite()) {
                    return Err(bad("non-finite value".into()));
                }
            }
        }
        Ok(())
    }
}
