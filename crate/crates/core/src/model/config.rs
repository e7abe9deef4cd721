use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::covariates::CovariateSet;
use crate::error::{CoreError, Result};

/// Architecture hyperparameters plus the covariate layout they apply to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HnamConfig {
    /// Internal dimensionality shared by every embedded covariate.
    pub embedding_size: usize,
    pub n_heads: usize,
    /// Width multiplier of the MLP and temporal-convolution hidden layer.
    pub mlp_expansion: usize,
    pub dropout: f64,
    /// Encoder window length.
    pub history: usize,
    /// Forecast horizon.
    pub horizon: usize,
    pub layer_norm_eps: f64,
    pub covariates: CovariateSet,
}

impl HnamConfig {
    pub const DEFAULT_EMBEDDING: usize = 32;
    pub const DEFAULT_HISTORY: usize = 35;
    pub const DEFAULT_HORIZON: usize = 14;

    pub fn new(covariates: CovariateSet) -> Self {
        Self {
            embedding_size: Self::DEFAULT_EMBEDDING,
            n_heads: 4,
            mlp_expansion: 4,
            dropout: 0.1,
            history: Self::DEFAULT_HISTORY,
            horizon: Self::DEFAULT_HORIZON,
            layer_norm_eps: 1e-5,
            covariates,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.embedding_size;
        if d == 0 || self.n_heads == 0 || !d.is_multiple_of(self.n_heads) {
            return Err(CoreError::Config(format!(
                "embedding size {d} must be a positive multiple of n_heads {}",
                self.n_heads
            )));
        }
        if self.mlp_expansion == 0 {
            return Err(CoreError::Config("mlp_expansion must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(CoreError::Config(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if self.horizon < 1 {
            return Err(CoreError::Config("horizon must be at least 1".into()));
        }
        if self.history < 3 {
            return Err(CoreError::Config(format!(
                "history {} shorter than the convolution support of 3",
                self.history
            )));
        }
        if self.covariates.causal().is_empty() {
            return Err(CoreError::Config(
                "at least one causal covariate required".into(),
            ));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.embedding_size / self.n_heads
    }

    pub fn hidden_size(&self) -> usize {
        self.embedding_size * self.mlp_expansion
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::covariates::{CovariateSpec, DType};

    fn config() -> HnamConfig {
        let set = CovariateSet::new(vec![CovariateSpec::causal(
            "weekday",
            DType::Categorical { cardinality: 7 },
            0,
        )])
        .unwrap();
        HnamConfig::new(set)
    }

    #[test]
    fn defaults_validate() {
        let c = config();
        c.validate().unwrap();
        assert_eq!(c.embedding_size, 32);
        assert_eq!((c.history, c.horizon), (35, 14));
    }

    #[test]
    fn heads_must_divide_embedding() {
        let mut c = config();
        c.n_heads = 5;
        assert!(c.validate().is_err());
    }

    #[test]
    fn short_history_rejected() {
        let mut c = config();
        c.history = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = config();
        let mut b = config();
        assert_eq!(a.hash(), b.hash());
        b.dropout = 0.2;
        assert_ne!(a.hash(), b.hash());
    }
}
