use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::{holdout_rmse, Pipeline};
use crate::data::{AnnualSeries, HoldoutBlock, HoldoutScheme, ProxyMatrix};
use crate::error::Result;
use crate::rng::Seed;
use crate::stats;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockRmse {
    pub block: HoldoutBlock,
    pub rmse: Option<f64>,
    pub n_years: usize,
    /// Fingerprint of the training inputs used for this block.
    pub fingerprint: Option<String>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmseReport {
    pub method: String,
    pub predictor_source: String,
    pub per_block: Vec<BlockRmse>,
    /// Mean and median over blocks that were scored.
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub replication_id: u64,
    pub seed: Seed,
}

impl RmseReport {
    pub fn rmses(&self) -> Vec<Option<f64>> {
        self.per_block.iter().map(|b| b.rmse).collect()
    }

    pub fn n_failed(&self) -> usize {
        self.per_block.iter().filter(|b| b.error.is_some()).count()
    }
}

/// Scores every block of `scheme`; block `i` uses child seed `seed.derive(i)`.
/// Per-block failures are recorded in the report, not propagated.
pub fn rmse_profile(
    pipeline: &Pipeline,
    proxies: &ProxyMatrix,
    target: &AnnualSeries,
    scheme: &HoldoutScheme,
    predictor_source: &str,
    seed: Seed,
) -> RmseReport {
    let per_block: Vec<BlockRmse> = scheme
        .blocks
        .par_iter()
        .enumerate()
        .map(|(i, b)| {
            match holdout_rmse(pipeline, proxies, target, &b.years, &scheme.calibration, seed.derive(i as u64)) {
                Ok(o) => BlockRmse {
                    block: *b,
                    rmse: Some(o.rmse),
                    n_years: o.n_years,
                    fingerprint: Some(o.fingerprint),
                    error: None,
                },
                Err(e) => BlockRmse {
                    block: *b,
                    rmse: None,
                    n_years: 0,
                    fingerprint: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    let ok: Vec<f64> = per_block.iter().filter_map(|b| b.rmse).collect();
    RmseReport {
        method: pipeline.method.label(),
        predictor_source: predictor_source.to_string(),
        mean: (!ok.is_empty()).then(|| stats::mean(&ok)),
        median: (!ok.is_empty()).then(|| stats::median(&ok)),
        per_block,
        replication_id: 0,
        seed,
    }
}

/// Same as [`rmse_profile`] but fails on the first block error.
pub fn rmse_profile_strict(
    pipeline: &Pipeline,
    proxies: &ProxyMatrix,
    target: &AnnualSeries,
    scheme: &HoldoutScheme,
    predictor_source: &str,
    seed: Seed,
) -> Result<RmseReport> {
    let r = rmse_profile(pipeline, proxies, target, scheme, predictor_source, seed);
    if let Some(b) = r.per_block.iter().find(|b| b.error.is_some()) {
        return Err(crate::Error::Numeric(format!(
            "block {}: {}",
            b.block.years,
            b.error.as_deref().unwrap_or("")
        )));
    }
    Ok(r)
}
