//! Data model: annual series, proxy matrices, CSV ingestion, centering,
//! standardization and holdout-block construction.

mod centering;
mod csvio;
mod holdout;
mod matrix;
mod series;
mod standardize;

pub use centering::{
    center_anomaly, center_fitted_bug, center_predictions, BuggyCentered, CenteringMode,
    CenteringSpec, FITTED_BUG_LABEL,
};
pub use csvio::{
    format_value, load_matrix, load_series, load_sidecar, save_matrix, save_sidecar,
    write_matrix, write_series, write_sidecar, MatrixSchema,
};
pub use holdout::{make_holdout_blocks, BlockMode, HoldoutBlock, HoldoutScheme, ModeFilter};
pub use matrix::{ProxyMatrix, SeriesKind, SeriesMeta};
pub use series::{AnnualSeries, YearRange};
pub use standardize::standardize;
