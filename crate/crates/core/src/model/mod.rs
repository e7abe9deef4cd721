//! Model definition: covariate schema, configuration, value transformation,
//! the network and its decomposed output.

pub mod config;
pub mod covariates;
pub mod forecast;
pub mod network;
pub mod transform;

use std::path::Path;

use serde_json::json;

pub use config::HnamConfig;
pub use covariates::{CovariateBundle, CovariateKind, CovariateSet, CovariateSpec, DType};
pub use forecast::ComposedForecast;
pub use network::{Batch, ForwardOutput, HnamModel, Mode};
pub use transform::{transform_t, transform_values, Standardization, TransformStats};

use crate::error::{CoreError, Result};

/// Writes parameters, configuration, fitted transform statistics and an
/// arbitrary `extra` payload to one file.
pub fn save_model(
    path: impl AsRef<Path>,
    model: &HnamModel,
    extra: serde_json::Value,
) -> Result<()> {
    let metadata = json!({
        "config": model.config(),
        "stats": model.stats(),
        "extra": extra,
    });
    hnam_tensor::snapshot::save(
        path,
        model.params(),
        model.root_seed(),
        &model.config().hash(),
        metadata,
    )?;
    Ok(())
}

/// Inverse of [`save_model`]. Rejects snapshots whose parameter layout does
/// not match the stored configuration.
pub fn load_model(path: impl AsRef<Path>) -> Result<(HnamModel, serde_json::Value)> {
    let (manifest, store) = hnam_tensor::snapshot::load(path)?;
    let mut meta = manifest.metadata;
    let config: HnamConfig = serde_json::from_value(meta["config"].take())?;
    if config.hash() != manifest.config_hash {
        return Err(CoreError::SpecMismatch(
            "configuration hash does not match snapshot".into(),
        ));
    }
    let stats: TransformStats = serde_json::from_value(meta["stats"].take())?;
    let mut model = HnamModel::new(config, stats, manifest.root_seed)?;
    model.load_params(&store)?;
    Ok((model, meta["extra"].take()))
}
