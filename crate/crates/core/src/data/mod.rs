//! Ingestion, series selection, feature engineering and window sampling.

pub mod features;
pub mod ingest;
pub mod records;
pub mod select;
pub mod store;
pub mod windows;

pub use features::{engineer_features, FeaturePlan, SeriesFeatures, Vocabulary};
pub use ingest::{ingest_csv, ingest_reader, write_long_format, ColumnMap, SchemaConfig};
pub use records::{weekday_index, DailyRecord, Dataset, Fields, SeriesKey};
pub use select::{select_series, Rejection, SelectionCriteria, SelectionReport};
pub use store::SampleStore;
pub use windows::{make_window, make_windows, split_origins, split_train_val, WindowSample};
