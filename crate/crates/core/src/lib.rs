//! Hierarchical neural additive demand forecasting.

pub mod data;
pub mod error;
pub mod eval;
pub mod fixtures;
pub mod model;
pub mod synthetic;
pub mod train;

pub use error::{CoreError, Result};
