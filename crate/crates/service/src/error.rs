use std::fmt;

use axum::http::StatusCode;
use hnam_core::CoreError;
use serde::{Deserialize, Serialize};

/// Machine-readable error classes shared by the CLI and the HTTP API.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorClass {
    Config,
    Io,
    Data,
    InvalidRequest,
    UnsupportedVersion,
    InvalidScenario,
    InvalidAdjustment,
    SeriesNotFound,
    OriginNotFound,
    ForecastNotFound,
    SpecMismatch,
    Training,
    Internal,
}

impl ErrorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Config => "CONFIG",
            Self::Io => "IO",
            Self::Data => "DATA",
            Self::InvalidRequest => "INVALID_REQUEST",
            Self::UnsupportedVersion => "UNSUPPORTED_VERSION",
            Self::InvalidScenario => "INVALID_SCENARIO",
            Self::InvalidAdjustment => "INVALID_ADJUSTMENT",
            Self::SeriesNotFound => "SERIES_NOT_FOUND",
            Self::OriginNotFound => "ORIGIN_NOT_FOUND",
            Self::ForecastNotFound => "FORECAST_NOT_FOUND",
            Self::SpecMismatch => "SPEC_MISMATCH",
            Self::Training => "TRAINING",
            Self::Internal => "INTERNAL",
        }
    }

    pub fn status(self) -> StatusCode {
        match self {
            Self::SeriesNotFound | Self::OriginNotFound | Self::ForecastNotFound => {
                StatusCode::NOT_FOUND
            }
            Self::InvalidRequest
            | Self::UnsupportedVersion
            | Self::InvalidScenario
            | Self::InvalidAdjustment
            | Self::Config => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ServiceError {
    pub class: ErrorClass,
    pub message: String,
}

impl ServiceError {
    pub fn new(class: ErrorClass, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
        }
    }

    /// `{"error": CLASS, "message": ...}` on one line.
    pub fn to_line(&self) -> String {
        serde_json::json!({ "error": self.class, "message": self.message }).to_string()
    }
}

impl fmt::Display for ServiceError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.class, self.message)
    }
}

impl std::error::Error for ServiceError {}

impl From<CoreError> for ServiceError {
    fn from(e: CoreError) -> Self {
        let class = match &e {
            CoreError::Config(_) => ErrorClass::Config,
            CoreError::Io(_) => ErrorClass::Io,
            CoreError::SeriesNotFound(_) => ErrorClass::SeriesNotFound,
            CoreError::OriginNotFound { .. } => ErrorClass::OriginNotFound,
            CoreError::SpecMismatch(_) => ErrorClass::SpecMismatch,
            CoreError::Diverged { .. } => ErrorClass::Training,
            CoreError::Schema(_)
            | CoreError::Row { .. }
            | CoreError::Csv(_)
            | CoreError::ZeroStd(_)
            | CoreError::InsufficientData(_)
            | CoreError::Store(_) => ErrorClass::Data,
            CoreError::Covariate { .. } => ErrorClass::InvalidScenario,
            _ => ErrorClass::Internal,
        };
        Self::new(class, e.to_string())
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        Self::new(ErrorClass::Io, e.to_string())
    }
}

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;
