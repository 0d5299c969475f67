use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use crate::data::{AnnualSeries, ProxyMatrix, YearRange};
use crate::error::{Error, Result};

/// Aligned design matrix and response for one fit.
///
/// Built from a proxy matrix and a target over an explicit list of training
/// years (which need not be contiguous). Source columns with any missing value
/// in those years, or with zero variance, are dropped and listed in
/// `dropped`.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub years: Vec<i32>,
    /// Source-column index of each column of `x`.
    pub columns: Vec<usize>,
    pub dropped: Vec<usize>,
    pub n_source_columns: usize,
}

impl TrainingSet {
    pub fn from_matrix(proxies: &ProxyMatrix, target: &AnnualSeries, years: &[i32]) -> Result<Self> {
        let years: Vec<i32> = years.iter().copied().filter(|&y| target.get(y).is_some()).collect();
        if years.len() < 2 {
            return Err(Error::Coverage(format!(
                "only {} training years with an observed target",
                years.len()
            )));
        }
        if let Some(&y) = years.iter().find(|&&y| !proxies.range().contains(y)) {
            return Err(Error::Coverage(format!(
                "training year {y} is outside the proxy span {}",
                proxies.range()
            )));
        }
        let mut columns = Vec::new();
        let mut dropped = Vec::new();
        for j in 0..proxies.n_series() {
            let vals: Option<Vec<f64>> = years.iter().map(|&y| proxies.get(y, j)).collect();
            match vals {
                Some(v) if has_spread(&v) => columns.push(j),
                _ => dropped.push(j),
            }
        }
        if !dropped.is_empty() {
            log::debug!(
                "dropped {} of {} columns with gaps or zero variance over the training years",
                dropped.len(),
                proxies.n_series()
            );
        }
        let x = DMatrix::from_fn(years.len(), columns.len(), |i, k| {
            proxies.get(years[i], columns[k]).unwrap_or(0.0)
        });
        let y = DVector::from_iterator(years.len(), years.iter().map(|&yr| target.get(yr).unwrap_or(0.0)));
        Ok(TrainingSet {
            x,
            y,
            years,
            columns,
            dropped,
            n_source_columns: proxies.n_series(),
        })
    }

    /// Wraps an in-memory design; rows are labelled with years `0..n`.
    pub fn from_dense(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Format(format!(
                "design has {} rows, response {}",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in design or response".into()));
        }
        let p = x.ncols();
        let (columns, dropped): (Vec<usize>, Vec<usize>) =
            (0..p).partition(|&j| has_spread(x.column(j).as_slice()));
        let x = x.select_columns(&columns);
        Ok(TrainingSet {
            years: (0..y.len() as i32).collect(),
            x,
            y,
            columns,
            dropped,
            n_source_columns: p,
        })
    }

    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn span(&self) -> YearRange {
        YearRange {
            start: *self.years.first().unwrap_or(&0),
            end: *self.years.last().unwrap_or(&0),
        }
    }

    /// Row subset (e.g. a cross-validation training fold).
    pub fn subset(&self, rows: &[usize]) -> TrainingSet {
        TrainingSet {
            x: self.x.select_rows(rows),
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
            years: rows.iter().map(|&i| self.years[i]).collect(),
            columns: self.columns.clone(),
            dropped: self.dropped.clone(),
            n_source_columns: self.n_source_columns,
        }
    }

    /// SHA-256 over years, response and design bits.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for y in &self.years {
            h.update(y.to_le_bytes());
        }
        for v in self.y.iter().chain(self.x.iter()) {
            h.update(v.to_bits().to_le_bytes());
        }
        for c in &self.columns {
            h.update((*c as u64).to_le_bytes());
        }
        hex::encode(h.finalize())
    }
}

fn has_spread(v: &[f64]) -> bool {
    v.iter().any(|&a| a != v[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SeriesKind, SeriesMeta};

    #[test]
    fn drops_gappy_and_constant_columns() {
        let a = AnnualSeries::new(0, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = AnnualSeries::from_options(0, vec![Some(1.0), None, Some(3.0), Some(0.0)]).unwrap();
        let c = AnnualSeries::new(0, vec![5.0; 4]).unwrap();
        let metas = (0..3).map(|j| SeriesMeta::new(format!("c{j}"), SeriesKind::Proxy, 0)).collect();
        let m = ProxyMatrix::from_series(metas, &[a, b, c]).unwrap();
        let y = AnnualSeries::new(0, vec![0.5, 0.1, 0.9, 0.3]).unwrap();
        let t = TrainingSet::from_matrix(&m, &y, &[0, 1, 2, 3]).unwrap();
        assert_eq!(t.columns, vec![0]);
        assert_eq!(t.dropped, vec![1, 2]);
        // without year 1, column b is complete
        let t = TrainingSet::from_matrix(&m, &y, &[0, 2, 3]).unwrap();
        assert_eq!(t.columns, vec![0, 1]);
        assert_eq!(t.x[(1, 1)], 3.0);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let x = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 4.0]);
        let y = DVector::from_vec(vec![1.0, 0.0, 1.0]);
        let a = TrainingSet::from_dense(x.clone(), y.clone()).unwrap();
        let b = TrainingSet::from_dense(x, DVector::from_vec(vec![1.0, 0.0, 2.0])).unwrap();
        assert_eq!(a.fingerprint(), a.clone().fingerprint());
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
