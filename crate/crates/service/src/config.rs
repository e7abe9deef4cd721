//! Run configuration file shared by the CLI subcommands.

use std::path::Path;

use hnam_core::data::SelectionCriteria;
use hnam_core::model::{CovariateSet, HnamConfig};
use hnam_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{ErrorClass, Result, ServiceError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub embedding_size: usize,
    pub n_heads: usize,
    pub mlp_expansion: usize,
    pub dropout: f64,
    pub layer_norm_eps: f64,
    pub history: usize,
    pub horizon: usize,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            embedding_size: HnamConfig::DEFAULT_EMBEDDING,
            n_heads: 4,
            mlp_expansion: 4,
            dropout: 0.1,
            layer_norm_eps: 1e-5,
            history: HnamConfig::DEFAULT_HISTORY,
            horizon: HnamConfig::DEFAULT_HORIZON,
            seed: 0,
        }
    }
}

impl ModelSection {
    pub fn config(&self, covariates: CovariateSet) -> HnamConfig {
        HnamConfig {
            embedding_size: self.embedding_size,
            n_heads: self.n_heads,
            mlp_expansion: self.mlp_expansion,
            dropout: self.dropout,
            history: self.history,
            horizon: self.horizon,
            layer_norm_eps: self.layer_norm_eps,
            covariates,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    /// Number of consecutive test periods ending at the last full window.
    pub periods: usize,
    pub period_length: usize,
    /// Fine-tune ahead of every period after the first.
    pub finetune: bool,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self {
            periods: 5,
            period_length: 30,
            finetune: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionSection {
    pub enabled: bool,
    #[serde(flatten)]
    pub criteria: SelectionCriteria,
}

impl Default for SelectionSection {
    fn default() -> Self {
        Self {
            enabled: true,
            criteria: SelectionCriteria::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub evaluation: EvaluationSection,
    pub selection: SelectionSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)
            .map_err(|e| ServiceError::new(ErrorClass::Config, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            ServiceError::new(ErrorClass::Config, format!("{}: {e}", path.display()))
        })?;
        Self::from_toml(&text).map_err(|e| {
            ServiceError::new(
                ErrorClass::Config,
                format!("{}: {}", path.display(), e.message),
            )
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: hnam_core::CoreError| ServiceError::new(ErrorClass::Config, e.to_string());
        self.train.validate().map_err(cfg)?;
        self.selection.criteria.validate().map_err(cfg)?;
        if self.evaluation.periods == 0 || self.evaluation.period_length == 0 {
            return Err(ServiceError::new(
                ErrorClass::Config,
                "evaluation needs at least one origin",
            ));
        }
        Ok(())
    }
}
