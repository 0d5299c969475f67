use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::linear::{empty_model, finish_prediction, ols_with_intercept, LinearMethod, LinearModel};
use super::training::TrainingSet;
use crate::data::{AnnualSeries, ProxyMatrix, SeriesMeta, YearRange};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// cos(latitude) for northern-hemisphere series, zero for southern.
    LatitudeCosine,
    /// |correlation with the target| over calibration.
    AbsCorrelation,
}

/// Composite-plus-scale: a weighted mean of standardized proxies rescaled to
/// the target's calibration mean and sd.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpsModel {
    /// One weight per source column; dropped columns weigh zero.
    pub weights: Vec<f64>,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
    pub composite_mean: f64,
    pub composite_sd: f64,
    pub target_mean: f64,
    pub target_sd: f64,
    pub weight_mode: WeightMode,
    pub calibration: YearRange,
    pub dropped_columns: Vec<usize>,
}

impl CpsModel {
    fn composite(&self, value: impl Fn(usize) -> Option<f64>) -> Option<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, &w) in self.weights.iter().enumerate() {
            if w > 0.0 {
                num += w * (value(j)? - self.column_means[j]) / self.column_sds[j];
                den += w;
            }
        }
        Some(num / den)
    }

    fn scale(&self, c: f64) -> f64 {
        (c - self.composite_mean) / self.composite_sd * self.target_sd + self.target_mean
    }

    pub fn predict(&self, proxies: &ProxyMatrix, years: &YearRange) -> Result<AnnualSeries> {
        if proxies.n_series() != self.weights.len() {
            return Err(Error::Format(format!(
                "model has {} weights, matrix {} columns",
                self.weights.len(),
                proxies.n_series()
            )));
        }
        let vals = years
            .years()
            .map(|y| {
                if !proxies.range().contains(y) {
                    return None;
                }
                self.composite(|j| proxies.get(y, j)).map(|c| self.scale(c))
            })
            .collect();
        finish_prediction(years, vals)
    }

    pub fn predict_training(&self, ts: &TrainingSet) -> Vec<f64> {
        (0..ts.n_obs())
            .map(|i| {
                let row = |j: usize| ts.columns.iter().position(|&c| c == j).map(|k| ts.x[(i, k)]);
                self.scale(self.composite(row).unwrap_or(f64::NAN))
            })
            .collect()
    }
}

fn column_moments(ts: &TrainingSet) -> (Vec<f64>, Vec<f64>) {
    (0..ts.n_features())
        .map(|k| {
            let col = ts.x.column(k);
            (stats::mean(col.as_slice()), stats::sample_sd(col.as_slice()))
        })
        .unzip()
}

/// Fits CPS on the training rows. `metas` describes every source column.
pub fn fit_cps(ts: &TrainingSet, metas: &[SeriesMeta], mode: WeightMode) -> Result<CpsModel> {
    if metas.len() != ts.n_source_columns {
        return Err(Error::Format(format!(
            "{} metadata entries for {} columns",
            metas.len(),
            ts.n_source_columns
        )));
    }
    let p = ts.n_source_columns;
    let (means, sds) = column_moments(ts);
    let mut weights = vec![0.0; p];
    let mut column_means = vec![0.0; p];
    let mut column_sds = vec![1.0; p];
    for (k, &j) in ts.columns.iter().enumerate() {
        column_means[j] = means[k];
        column_sds[j] = sds[k];
        weights[j] = match mode {
            WeightMode::LatitudeCosine => {
                let lat = metas[j].latitude.ok_or_else(|| {
                    Error::Config(format!("series '{}' has no latitude for cosine weighting", metas[j].name))
                })?;
                if lat >= 0.0 {
                    lat.to_radians().cos().max(0.0)
                } else {
                    0.0
                }
            }
            WeightMode::AbsCorrelation => stats::correlation(ts.x.column(k).as_slice(), ts.y.as_slice())
                .map_or(0.0, f64::abs),
        };
    }
    if !weights.iter().any(|&w| w > 0.0) {
        return Err(Error::DegenerateSeries("every CPS weight is zero".into()));
    }
    let mut model = CpsModel {
        weights,
        column_means,
        column_sds,
        composite_mean: 0.0,
        composite_sd: 1.0,
        target_mean: stats::mean(ts.y.as_slice()),
        target_sd: stats::sample_sd(ts.y.as_slice()),
        weight_mode: mode,
        calibration: ts.span(),
        dropped_columns: ts.dropped.clone(),
    };
    let comp: Vec<f64> = (0..ts.n_obs())
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            for (k, &j) in ts.columns.iter().enumerate() {
                let w = model.weights[j];
                if w > 0.0 {
                    num += w * (ts.x[(i, k)] - means[k]) / sds[k];
                    den += w;
                }
            }
            num / den
        })
        .collect();
    model.composite_mean = stats::mean(&comp);
    model.composite_sd = stats::sample_sd(&comp);
    if !(model.composite_sd > 0.0) {
        return Err(Error::DegenerateSeries("composite is constant over calibration".into()));
    }
    Ok(model)
}

/// Equal-weight mean of standardized proxies, then OLS of the target on it.
pub fn fit_composite_regression(ts: &TrainingSet) -> Result<LinearModel> {
    let p = ts.n_features();
    if p == 0 {
        return Err(Error::InsufficientData("no usable proxy columns".into()));
    }
    let (means, sds) = column_moments(ts);
    let comp = DMatrix::from_fn(ts.n_obs(), 1, |i, _| {
        (0..p).map(|k| (ts.x[(i, k)] - means[k]) / sds[k]).sum::<f64>() / p as f64
    });
    let (a, b) = ols_with_intercept(&comp, &ts.y)?;
    let mut m = empty_model(ts, LinearMethod::CompositeRegression);
    let mut b0 = a;
    for (k, &j) in ts.columns.iter().enumerate() {
        let coef = b[0] / (p as f64 * sds[k]);
        m.coefficients[j] = coef;
        m.standardized_coefficients[j] = b[0] / p as f64;
        m.column_means[j] = means[k];
        m.column_sds[j] = sds[k];
        b0 -= coef * means[k];
    }
    m.intercept = b0;
    Ok(m)
}
