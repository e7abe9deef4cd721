//! Command-line entry points and the HTTP JSON service for decomposed
//! forecasts, what-if scenarios and judgmental adjustments.

pub mod adjust;
pub mod api;
pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod plot;
pub mod scenario;
pub mod server;

pub use error::{ErrorClass, Result, ServiceError};
