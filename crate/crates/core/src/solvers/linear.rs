use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::training::TrainingSet;
use crate::data::{AnnualSeries, ProxyMatrix, YearRange};
use crate::error::{Error, Result};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearMethod {
    Lasso,
    /// Lasso with a free, non-centred intercept column (an interpretation).
    NoncentralLasso,
    ElasticNet,
    PcOls,
    CompositeRegression,
    Ols,
    Intercept,
}

impl LinearMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            LinearMethod::Lasso => "lasso",
            LinearMethod::NoncentralLasso => "noncentral_lasso",
            LinearMethod::ElasticNet => "elastic_net",
            LinearMethod::PcOls => "pc_ols",
            LinearMethod::CompositeRegression => "composite_regression",
            LinearMethod::Ols => "ols",
            LinearMethod::Intercept => "intercept",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Penalty {
    pub lambda: f64,
    pub alpha: f64,
}

/// Solver bookkeeping for penalized fits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub sweeps: usize,
    pub converged: bool,
    /// Largest absolute violation of the optimality conditions.
    pub kkt_violation: f64,
}

/// A fitted linear predictor `intercept + Σ coefficients[j] · x_j`.
///
/// Vectors are indexed by source column; dropped or unused columns carry a
/// zero coefficient, mean 0 and sd 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub method: LinearMethod,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Coefficients on the internally standardized predictor scale.
    pub standardized_coefficients: Vec<f64>,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
    pub penalty: Option<Penalty>,
    pub calibration: YearRange,
    pub dropped_columns: Vec<usize>,
    pub diagnostics: Option<FitDiagnostics>,
    pub notes: Vec<String>,
}

impl LinearModel {
    pub fn n_nonzero(&self) -> usize {
        self.coefficients.iter().filter(|c| **c != 0.0).count()
    }

    pub fn active_columns(&self) -> Vec<usize> {
        (0..self.coefficients.len())
            .filter(|&j| self.coefficients[j] != 0.0)
            .collect()
    }

    /// Predictions for design rows whose columns map to source columns
    /// `columns`.
    pub fn predict_design(&self, x: &DMatrix<f64>, columns: &[usize]) -> DVector<f64> {
        DVector::from_fn(x.nrows(), |i, _| {
            self.intercept
                + columns
                    .iter()
                    .enumerate()
                    .map(|(k, &j)| self.coefficients[j] * x[(i, k)])
                    .sum::<f64>()
        })
    }

    pub fn predict_training(&self, ts: &TrainingSet) -> DVector<f64> {
        self.predict_design(&ts.x, &ts.columns)
    }

    /// Predictions over `years`; a year is masked when any column with a
    /// nonzero coefficient is missing there.
    pub fn predict(&self, proxies: &ProxyMatrix, years: &YearRange) -> Result<AnnualSeries> {
        if proxies.n_series() != self.coefficients.len() {
            return Err(Error::Format(format!(
                "model has {} coefficients, matrix {} columns",
                self.coefficients.len(),
                proxies.n_series()
            )));
        }
        let active = self.active_columns();
        let vals = years
            .years()
            .map(|y| {
                if !proxies.range().contains(y) {
                    return None;
                }
                let mut acc = self.intercept;
                for &j in &active {
                    acc += self.coefficients[j] * proxies.get(y, j)?;
                }
                Some(acc)
            })
            .collect();
        finish_prediction(years, vals)
    }
}

pub(crate) fn finish_prediction(years: &YearRange, vals: Vec<Option<f64>>) -> Result<AnnualSeries> {
    if vals.iter().all(Option::is_none) {
        return Err(Error::Coverage(format!("no model inputs available in {years}")));
    }
    AnnualSeries::from_options(years.start, vals)
}

/// Least squares with an unpenalized intercept, solved by SVD so that
/// rank-deficient designs get the minimum-norm slope vector.
pub(crate) fn ols_with_intercept(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
    let n = y.len();
    if n == 0 {
        return Err(Error::InsufficientData("no observations for least squares".into()));
    }
    let ybar = y.mean();
    if x.ncols() == 0 {
        return Ok((ybar, DVector::zeros(0)));
    }
    let means: Vec<f64> = (0..x.ncols()).map(|j| x.column(j).mean()).collect();
    let xc = DMatrix::from_fn(n, x.ncols(), |i, j| x[(i, j)] - means[j]);
    let yc = y.map(|v| v - ybar);
    let svd = xc.svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * 1e-12 * (n.max(x.ncols()) as f64);
    let beta = svd.solve(&yc, eps).map_err(|e| Error::Numeric(e.to_string()))?;
    let b0 = ybar - beta.iter().zip(&means).map(|(b, m)| b * m).sum::<f64>();
    Ok((b0, beta))
}

/// Unpenalized least squares on every usable column.
pub fn fit_ols(ts: &TrainingSet) -> Result<LinearModel> {
    let (b0, beta) = ols_with_intercept(&ts.x, &ts.y)?;
    let mut m = empty_model(ts, LinearMethod::Ols);
    m.intercept = b0;
    for (k, &j) in ts.columns.iter().enumerate() {
        let col = ts.x.column(k);
        m.column_means[j] = col.mean();
        m.column_sds[j] = stats::sample_sd(col.as_slice());
        m.coefficients[j] = beta[k];
        m.standardized_coefficients[j] = beta[k] * m.column_sds[j];
    }
    Ok(m)
}

/// Predicts the calibration mean of `y` everywhere.
pub fn fit_intercept(y: &AnnualSeries, calibration: &YearRange) -> Result<LinearModel> {
    let obs = y.observed_in(calibration);
    if obs.is_empty() {
        return Err(Error::DegenerateReference {
            start: calibration.start,
            end: calibration.end,
        });
    }
    Ok(LinearModel {
        method: LinearMethod::Intercept,
        intercept: stats::mean(&obs),
        coefficients: Vec::new(),
        standardized_coefficients: Vec::new(),
        column_means: Vec::new(),
        column_sds: Vec::new(),
        penalty: None,
        calibration: *calibration,
        dropped_columns: Vec::new(),
        diagnostics: None,
        notes: Vec::new(),
    })
}

pub(crate) fn empty_model(ts: &TrainingSet, method: LinearMethod) -> LinearModel {
    let p = ts.n_source_columns;
    LinearModel {
        method,
        intercept: 0.0,
        coefficients: vec![0.0; p],
        standardized_coefficients: vec![0.0; p],
        column_means: vec![0.0; p],
        column_sds: vec![1.0; p],
        penalty: None,
        calibration: ts.span(),
        dropped_columns: ts.dropped.clone(),
        diagnostics: None,
        notes: Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_exact_plane() {
        let x = DMatrix::from_fn(10, 2, |i, j| ((i * (j + 2)) % 7) as f64 + i as f64 * 0.1);
        let y = DVector::from_fn(10, |i, _| 3.0 + 2.0 * x[(i, 0)] - 0.5 * x[(i, 1)]);
        let ts = TrainingSet::from_dense(x, y).unwrap();
        let m = fit_ols(&ts).unwrap();
        assert!((m.intercept - 3.0).abs() < 1e-10);
        assert!((m.coefficients[0] - 2.0).abs() < 1e-10);
        assert!((m.coefficients[1] + 0.5).abs() < 1e-10);
    }

    #[test]
    fn intercept_model_returns_calibration_mean() {
        let y = AnnualSeries::new(1900, vec![1.0, 2.0, 3.0, 10.0]).unwrap();
        let cal = YearRange::new(1900, 1902).unwrap();
        let m = fit_intercept(&y, &cal).unwrap();
        assert_eq!(m.intercept, 2.0);
    }

    #[test]
    fn zero_coefficients_give_constant_series() {
        let y = AnnualSeries::new(0, vec![1.0, 3.0]).unwrap();
        let m = fit_intercept(&y, &YearRange::new(0, 1).unwrap()).unwrap();
        let px = ProxyMatrix::from_rows(0, vec![], 5, vec![], vec![]).unwrap();
        let p = m.predict(&px, &YearRange::new(0, 4).unwrap()).unwrap();
        assert_eq!(p.observed(), vec![2.0; 5]);
    }
}
