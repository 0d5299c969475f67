//! Holdout-block cross-validation, null pseudoproxy benchmarks and
//! Monte Carlo significance.

mod grid;
mod nulls;
mod pipeline;
mod report;

pub use grid::{
    grid_csv, matrix_fingerprint, robustness_grid, write_grid, CellKey, CellReport, GridReport, GridSpec,
    GridTarget, PredictorSource,
};
pub use nulls::{
    empirical_ar1_null, null_distribution, significance, BandRow, Exceedance, NullBand, NullDistribution, NullSpec,
    SignificanceMode,
};
pub use pipeline::{fit_method, holdout_rmse, Fitted, HoldoutOutcome, LambdaRule, MethodConfig, Pipeline};
pub use report::{rmse_profile, rmse_profile_strict, BlockRmse, RmseReport};
