use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linear::{empty_model, ols_with_intercept, LinearMethod, LinearModel};
use super::training::TrainingSet;
use crate::data::{AnnualSeries, ProxyMatrix, YearRange};
use crate::error::{Error, Result};

/// Year × component score matrix with a per-year missing flag.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub start_year: i32,
    pub values: DMatrix<f64>,
    pub missing: Vec<bool>,
}

impl ScoreMatrix {
    pub fn range(&self) -> YearRange {
        YearRange {
            start: self.start_year,
            end: self.start_year + self.values.nrows() as i32 - 1,
        }
    }

    pub fn n_components(&self) -> usize {
        self.values.ncols()
    }

    pub fn row(&self, year: i32) -> Option<Vec<f64>> {
        if !self.range().contains(year) {
            return None;
        }
        let i = (year - self.start_year) as usize;
        (!self.missing[i]).then(|| self.values.row(i).iter().copied().collect())
    }

    pub fn component(&self, k: usize) -> Result<AnnualSeries> {
        AnnualSeries::with_mask(
            self.start_year,
            self.values.column(k).iter().copied().collect(),
            self.missing.clone(),
        )
    }
}

/// Principal components of the standardized proxy columns.
///
/// Eigenvalues are those of the sample correlation matrix `ZᵀZ/(n−1)`;
/// each loading vector has its largest-magnitude entry positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcBasis {
    /// Source columns used, in loading-row order.
    pub columns: Vec<usize>,
    pub dropped: Vec<usize>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub loadings: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// All nonzero-rank eigenvalues, for retention rules.
    pub spectrum: Vec<f64>,
    pub scores: ScoreMatrix,
    pub period: YearRange,
    pub group_labels: Option<Vec<usize>>,
}

impl PcBasis {
    /// Applies the stored standardization and loadings to another matrix with
    /// the same column layout.
    pub fn project(&self, proxies: &ProxyMatrix) -> ScoreMatrix {
        let n = proxies.n_years();
        let k = self.loadings.ncols();
        let mut values = DMatrix::zeros(n, k);
        let mut missing = vec![false; n];
        for (i, year) in proxies.range().years().enumerate() {
            let z: Option<Vec<f64>> = self
                .columns
                .iter()
                .enumerate()
                .map(|(c, &j)| proxies.get(year, j).map(|v| (v - self.means[c]) / self.sds[c]))
                .collect();
            match z {
                Some(z) => {
                    for m in 0..k {
                        values[(i, m)] = (0..z.len()).map(|c| z[c] * self.loadings[(c, m)]).sum();
                    }
                }
                None => missing[i] = true,
            }
        }
        ScoreMatrix {
            start_year: proxies.start_year(),
            values,
            missing,
        }
    }
}

pub(crate) struct PcaFit {
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub loadings: DMatrix<f64>,
    pub spectrum: Vec<f64>,
}

/// PCA of the rows of `x` after standardizing each column (sample sd).
pub(crate) fn pca_dense(x: &DMatrix<f64>) -> Result<PcaFit> {
    let (n, p) = x.shape();
    if n < 2 || p == 0 {
        return Err(Error::InsufficientData(format!("PCA on a {n}×{p} matrix")));
    }
    let mut means = Vec::with_capacity(p);
    let mut sds = Vec::with_capacity(p);
    for j in 0..p {
        let col = x.column(j);
        let m = col.mean();
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        if !(sd > 0.0) {
            return Err(Error::DegenerateSeries(format!("column {j} has zero variance")));
        }
        means.push(m);
        sds.push(sd);
    }
    let z = DMatrix::from_fn(n, p, |i, j| (x[(i, j)] - means[j]) / sds[j]);
    let svd = z.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Numeric("SVD did not return loadings".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let r = order.len();
    let mut loadings = DMatrix::zeros(p, r);
    let mut spectrum = Vec::with_capacity(r);
    for (k, &o) in order.iter().enumerate() {
        let s = svd.singular_values[o];
        spectrum.push(s * s / (n - 1) as f64);
        let mut v: Vec<f64> = vt.row(o).iter().copied().collect();
        let lead = v
            .iter()
            .copied()
            .fold(0.0_f64, |acc, a| if a.abs() > acc.abs() { a } else { acc });
        if lead < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        for (c, a) in v.into_iter().enumerate() {
            loadings[(c, k)] = a;
        }
    }
    Ok(PcaFit {
        means,
        sds,
        loadings,
        spectrum,
    })
}

/// PCA of the matrix columns over `period`, keeping `k` components.
///
/// Columns with gaps or zero variance in the period are dropped. Scores are
/// given for every year where all used columns are observed.
pub fn pca_decompose(proxies: &ProxyMatrix, k: usize, period: &YearRange) -> Result<PcBasis> {
    if !proxies.range().contains_range(period) {
        return Err(Error::Coverage(format!(
            "PCA period {period} outside matrix span {}",
            proxies.range()
        )));
    }
    let years: Vec<i32> = period.years().collect();
    let mut columns = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..proxies.n_series() {
        let v: Option<Vec<f64>> = years.iter().map(|&y| proxies.get(y, j)).collect();
        match v {
            Some(v) if v.iter().any(|&a| a != v[0]) => columns.push(j),
            _ => dropped.push(j),
        }
    }
    let limit = years.len().min(columns.len());
    if k == 0 || k > limit {
        return Err(Error::Config(format!(
            "K={k} must lie in 1..={limit} (years {}, usable series {})",
            years.len(),
            columns.len()
        )));
    }
    let x = DMatrix::from_fn(years.len(), columns.len(), |i, c| {
        proxies.get(years[i], columns[c]).unwrap_or(0.0)
    });
    let fit = pca_dense(&x)?;
    let mut basis = PcBasis {
        columns,
        dropped,
        means: fit.means,
        sds: fit.sds,
        loadings: fit.loadings.columns(0, k).into_owned(),
        eigenvalues: fit.spectrum[..k].to_vec(),
        spectrum: fit.spectrum,
        scores: ScoreMatrix {
            start_year: proxies.start_year(),
            values: DMatrix::zeros(0, 0),
            missing: Vec::new(),
        },
        period: *period,
        group_labels: None,
    };
    basis.scores = basis.project(proxies);
    Ok(basis)
}

/// OLS of the target on leading principal components.
///
/// With `groups` (one label per source column), PCA runs within each group,
/// the top `k` components of every group (fewer if the group is smaller) are
/// pooled, and the OLS uses the pooled scores.
pub fn fit_pc_ols(ts: &TrainingSet, k: usize, groups: Option<&[usize]>) -> Result<LinearModel> {
    let n = ts.n_obs();
    let p = ts.n_features();
    if k == 0 || k > n.min(p) {
        return Err(Error::Config(format!("K={k} must lie in 1..={}", n.min(p))));
    }
    let sets: Vec<Vec<usize>> = match groups {
        None => vec![(0..p).collect()],
        Some(labels) => {
            if labels.len() != ts.n_source_columns {
                return Err(Error::Config(format!(
                    "{} group labels for {} columns",
                    labels.len(),
                    ts.n_source_columns
                )));
            }
            let mut ids: Vec<usize> = ts.columns.iter().map(|&j| labels[j]).collect();
            ids.sort_unstable();
            ids.dedup();
            ids.iter()
                .map(|g| (0..p).filter(|&c| labels[ts.columns[c]] == *g).collect())
                .collect()
        }
    };
    // each block: columns of ts.x, its PCA, and the number of components kept
    let mut blocks = Vec::new();
    let mut total = 0;
    for cols in sets {
        let sub = ts.x.select_columns(&cols);
        let fit = pca_dense(&sub)?;
        let kg = k.min(cols.len()).min(n);
        total += kg;
        blocks.push((cols, fit, kg));
    }
    let mut scores = DMatrix::zeros(n, total);
    let mut off = 0;
    for (cols, fit, kg) in &blocks {
        for i in 0..n {
            for m in 0..*kg {
                scores[(i, off + m)] = cols
                    .iter()
                    .enumerate()
                    .map(|(c, &col)| (ts.x[(i, col)] - fit.means[c]) / fit.sds[c] * fit.loadings[(c, m)])
                    .sum();
            }
        }
        off += kg;
    }
    let (g0, gamma) = ols_with_intercept(&scores, &ts.y)?;
    let mut model = empty_model(ts, LinearMethod::PcOls);
    let mut b0 = g0;
    let mut off = 0;
    for (cols, fit, kg) in &blocks {
        for (c, &col) in cols.iter().enumerate() {
            let std_coef: f64 = (0..*kg).map(|m| fit.loadings[(c, m)] * gamma[off + m]).sum();
            let j = ts.columns[col];
            let coef = std_coef / fit.sds[c];
            model.coefficients[j] = coef;
            model.standardized_coefficients[j] = std_coef;
            model.column_means[j] = fit.means[c];
            model.column_sds[j] = fit.sds[c];
            b0 -= coef * fit.means[c];
        }
        off += kg;
    }
    model.intercept = b0;
    model.notes.push(format!("components={total}"));
    if groups.is_some() {
        model.notes.push(format!("groups={}", blocks.len()));
    }
    Ok(model)
}

/// Residual inner products with each regressor, for checking an OLS fit.
pub fn residual_orthogonality(x: &DMatrix<f64>, y: &DVector<f64>, fitted: &DVector<f64>) -> Vec<f64> {
    let r = y - fitted;
    (0..x.ncols()).map(|j| x.column(j).dot(&r)).collect()
}
