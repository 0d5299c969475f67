use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::pipeline::Pipeline;
use super::report::{rmse_profile, RmseReport};
use crate::data::{AnnualSeries, HoldoutBlock, HoldoutScheme, ProxyMatrix, YearRange};
use crate::error::{Error, Result};
use crate::pseudoproxy::{fit_ar1, gen_noise_matrix, NoiseSpec};
use crate::rng::Seed;
use crate::stats;

/// A no-signal pseudoproxy generator standing in for the real proxy matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullSpec {
    pub noise: NoiseSpec,
    pub n_series: usize,
    /// Span of the generated matrix.
    pub years: YearRange,
    /// Latitudes copied onto the generated columns (needed by cosine CPS).
    pub latitudes: Option<Vec<f64>>,
}

impl NullSpec {
    pub fn label(&self) -> String {
        self.noise.label()
    }

    /// Draws one null matrix.
    pub fn draw(&self, seed: Seed) -> Result<ProxyMatrix> {
        let mut m = gen_noise_matrix(&self.noise, self.years, self.n_series, seed)?;
        if let Some(lats) = &self.latitudes {
            if lats.len() != self.n_series {
                return Err(Error::Config(format!(
                    "{} latitudes for {} null series",
                    lats.len(),
                    self.n_series
                )));
            }
            for (c, &lat) in m.columns_mut().iter_mut().zip(lats) {
                c.latitude = Some(lat);
            }
        }
        Ok(m)
    }

    /// Mirrors a real proxy matrix: same span, column count and latitudes.
    pub fn like(noise: NoiseSpec, proxies: &ProxyMatrix) -> Self {
        let lats: Option<Vec<f64>> = proxies.columns().iter().map(|c| c.latitude).collect();
        NullSpec {
            noise,
            n_series: proxies.n_series(),
            years: proxies.range(),
            latitudes: lats,
        }
    }
}

/// AR1 nulls with coefficients fitted to each real proxy over `window`.
pub fn empirical_ar1_null(proxies: &ProxyMatrix, window: &YearRange) -> Result<NoiseSpec> {
    let params = (0..proxies.n_series())
        .map(|j| fit_ar1(&proxies.column(j).subseries(window)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(NoiseSpec::Ar1Empirical { params })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullDistribution {
    pub null: String,
    pub replications: Vec<RmseReport>,
}

impl NullDistribution {
    pub fn n_replications(&self) -> usize {
        self.replications.len()
    }

    /// Scored RMSE samples for block `i` across replications.
    pub fn block_samples(&self, i: usize) -> Vec<f64> {
        self.replications
            .iter()
            .filter_map(|r| r.per_block.get(i).and_then(|b| b.rmse))
            .collect()
    }

    /// Per-replication block means (one aggregation of the null).
    pub fn replication_means(&self) -> Vec<f64> {
        self.replications.iter().filter_map(|r| r.mean).collect()
    }

    /// Every per-block RMSE pooled (the other aggregation).
    pub fn pooled(&self) -> Vec<f64> {
        self.replications
            .iter()
            .flat_map(|r| r.per_block.iter().filter_map(|b| b.rmse))
            .collect()
    }
}

/// Replication `r` draws its matrix from `seed.derive_path([0, r])` and scores
/// it with `seed.derive_path([1, r])`.
pub fn null_distribution(
    pipeline: &Pipeline,
    null: &NullSpec,
    target: &AnnualSeries,
    scheme: &HoldoutScheme,
    n_replications: usize,
    seed: Seed,
) -> Result<NullDistribution> {
    if n_replications == 0 {
        return Err(Error::Config("null distribution needs at least one replication".into()));
    }
    let label = null.label();
    let replications = (0..n_replications as u64)
        .into_par_iter()
        .map(|r| {
            let m = null.draw(seed.derive_path(&[0, r]))?;
            let mut rep = rmse_profile(pipeline, &m, target, scheme, &label, seed.derive_path(&[1, r]));
            rep.replication_id = r;
            Ok(rep)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NullDistribution {
        null: label,
        replications,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignificanceMode {
    PerBlock,
    Aggregate,
}

/// Monte Carlo exceedance: the share of null samples at or below the real
/// RMSE, raw and with the +1 correction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exceedance {
    pub block: Option<HoldoutBlock>,
    pub count: usize,
    pub n: usize,
    pub raw: f64,
    pub corrected: f64,
}

impl Exceedance {
    fn new(block: Option<HoldoutBlock>, real: f64, null: &[f64]) -> Self {
        let n = null.len();
        let count = null.iter().filter(|&&v| v <= real).count();
        Exceedance {
            block,
            count,
            n,
            raw: count as f64 / n as f64,
            corrected: (count + 1) as f64 / (n + 1) as f64,
        }
    }
}

pub fn significance(real: &RmseReport, null: &NullDistribution, mode: SignificanceMode) -> Result<Vec<Exceedance>> {
    if null.replications.is_empty() {
        return Err(Error::Config("empty null distribution".into()));
    }
    match mode {
        SignificanceMode::PerBlock => Ok(real
            .per_block
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                let samples = null.block_samples(i);
                (b.rmse.is_some() && !samples.is_empty())
                    .then(|| Exceedance::new(Some(b.block), b.rmse.unwrap_or(0.0), &samples))
            })
            .collect()),
        SignificanceMode::Aggregate => {
            let real_mean = real
                .mean
                .ok_or_else(|| Error::Coverage("real report has no scored blocks".into()))?;
            Ok(vec![Exceedance::new(None, real_mean, &null.replication_means())])
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub block: HoldoutBlock,
    pub quantiles: Vec<f64>,
}

/// Per-block quantiles of the null RMSE distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullBand {
    pub probabilities: Vec<f64>,
    pub rows: Vec<BandRow>,
    pub n_replications: usize,
}

impl NullBand {
    pub fn from_distribution(null: &NullDistribution, probabilities: &[f64]) -> Result<Self> {
        if probabilities.windows(2).any(|w| w[1] < w[0]) || probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("band probabilities must be sorted within [0, 1]".into()));
        }
        let first = null
            .replications
            .first()
            .ok_or_else(|| Error::Config("empty null distribution".into()))?;
        let rows = first
            .per_block
            .iter()
            .enumerate()
            .filter_map(|(i, b)| {
                let mut s = null.block_samples(i);
                if s.is_empty() {
                    return None;
                }
                s.sort_by(f64::total_cmp);
                Some(BandRow {
                    block: b.block,
                    quantiles: probabilities.iter().map(|&p| stats::quantile_sorted(&s, p)).collect(),
                })
            })
            .collect();
        Ok(NullBand {
            probabilities: probabilities.to_vec(),
            rows,
            n_replications: null.n_replications(),
        })
    }

    /// Share of blocks where `real` lies within the outermost quantiles.
    pub fn coverage(&self, real: &RmseReport) -> f64 {
        let mut inside = 0;
        let mut total = 0;
        for row in &self.rows {
            if let Some(b) = real.per_block.iter().find(|b| b.block == row.block) {
                if let Some(v) = b.rmse {
                    total += 1;
                    let lo = row.quantiles[0];
                    let hi = row.quantiles[row.quantiles.len() - 1];
                    if v >= lo && v <= hi {
                        inside += 1;
                    }
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            inside as f64 / total as f64
        }
    }
}
