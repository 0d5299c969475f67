use serde::{Deserialize, Serialize};

use super::series::{AnnualSeries, YearRange};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeriesKind {
    Proxy,
    Pseudoproxy,
    LocalTemperature,
    ExternalPrediction,
}

impl SeriesKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SeriesKind::Proxy => "proxy",
            SeriesKind::Pseudoproxy => "pseudoproxy",
            SeriesKind::LocalTemperature => "local_temperature",
            SeriesKind::ExternalPrediction => "external_prediction",
        }
    }
}

impl std::str::FromStr for SeriesKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "proxy" => Ok(SeriesKind::Proxy),
            "pseudoproxy" => Ok(SeriesKind::Pseudoproxy),
            "local_temperature" => Ok(SeriesKind::LocalTemperature),
            "external_prediction" => Ok(SeriesKind::ExternalPrediction),
            other => Err(Error::Format(format!("unknown series kind '{other}'"))),
        }
    }
}

/// Per-column metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub name: String,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    pub kind: SeriesKind,
    pub first_year: i32,
    /// Free-form provenance, e.g. the generator spec or a drawn slope.
    pub note: Option<String>,
}

impl SeriesMeta {
    pub fn new(name: impl Into<String>, kind: SeriesKind, first_year: i32) -> Self {
        SeriesMeta {
            name: name.into(),
            latitude: None,
            longitude: None,
            kind,
            first_year,
            note: None,
        }
    }

    pub fn with_location(mut self, latitude: f64, longitude: f64) -> Self {
        self.latitude = Some(latitude);
        self.longitude = Some(longitude);
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Year x series matrix with a missing mask, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyMatrix {
    start_year: i32,
    n_years: usize,
    columns: Vec<SeriesMeta>,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl ProxyMatrix {
    /// Builds a matrix from row-major storage.
    pub fn from_rows(
        start_year: i32,
        columns: Vec<SeriesMeta>,
        n_years: usize,
        mut values: Vec<f64>,
        missing: Vec<bool>,
    ) -> Result<Self> {
        let n = n_years * columns.len();
        if n_years == 0 {
            return Err(Error::InsufficientData("matrix needs at least one year".into()));
        }
        if values.len() != n || missing.len() != n {
            return Err(Error::Format(format!(
                "matrix storage has {} values / {} mask bits, expected {n}",
                values.len(),
                missing.len()
            )));
        }
        for meta in &columns {
            if let Some(lat) = meta.latitude {
                if !(-90.0..=90.0).contains(&lat) {
                    return Err(Error::Format(format!(
                        "latitude {lat} of '{}' outside [-90, 90]",
                        meta.name
                    )));
                }
            }
        }
        for (v, &m) in values.iter_mut().zip(&missing) {
            if m {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::Numeric("non-finite matrix entry".into()));
            }
        }
        Ok(ProxyMatrix {
            start_year,
            n_years,
            columns,
            values,
            missing,
        })
    }

    /// Assembles a matrix from series sharing one year span.
    pub fn from_series(columns: Vec<SeriesMeta>, series: &[AnnualSeries]) -> Result<Self> {
        if series.is_empty() || columns.len() != series.len() {
            return Err(Error::Format(format!(
                "{} metadata entries for {} series",
                columns.len(),
                series.len()
            )));
        }
        let range = series[0].range();
        if series.iter().any(|s| s.range() != range) {
            return Err(Error::Format("series do not share a common year span".into()));
        }
        let p = series.len();
        let n = range.len();
        let mut values = vec![0.0; n * p];
        let mut missing = vec![false; n * p];
        for (j, s) in series.iter().enumerate() {
            for (i, (&v, &m)) in s.raw_values().iter().zip(s.missing_mask()).enumerate() {
                values[i * p + j] = v;
                missing[i * p + j] = m;
            }
        }
        Self::from_rows(range.start, columns, n, values, missing)
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.n_years as i32 - 1
    }

    pub fn range(&self) -> YearRange {
        YearRange {
            start: self.start_year,
            end: self.end_year(),
        }
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn n_series(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[SeriesMeta] {
        &self.columns
    }

    pub fn columns_mut(&mut self) -> &mut [SeriesMeta] {
        &mut self.columns
    }

    fn row_index(&self, year: i32) -> Option<usize> {
        let i = year - self.start_year;
        (i >= 0 && (i as usize) < self.n_years).then_some(i as usize)
    }

    pub fn get(&self, year: i32, column: usize) -> Option<f64> {
        let i = self.row_index(year)?;
        let k = i * self.n_series() + column;
        (!self.missing[k]).then_some(self.values[k])
    }

    pub fn column(&self, j: usize) -> AnnualSeries {
        let p = self.n_series();
        let values = (0..self.n_years).map(|i| self.values[i * p + j]).collect();
        let missing = (0..self.n_years).map(|i| self.missing[i * p + j]).collect();
        AnnualSeries::with_mask(self.start_year, values, missing)
            .expect("matrix storage is always a valid series")
    }

    /// Whether every column in `cols` is observed in `year`.
    pub fn row_complete(&self, year: i32, cols: &[usize]) -> bool {
        match self.row_index(year) {
            Some(i) => cols.iter().all(|&j| !self.missing[i * self.n_series() + j]),
            None => false,
        }
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn select_columns(&self, cols: &[usize]) -> ProxyMatrix {
        let p = self.n_series();
        let q = cols.len();
        let mut values = Vec::with_capacity(self.n_years * q);
        let mut missing = Vec::with_capacity(self.n_years * q);
        for i in 0..self.n_years {
            for &j in cols {
                values.push(self.values[i * p + j]);
                missing.push(self.missing[i * p + j]);
            }
        }
        ProxyMatrix {
            start_year: self.start_year,
            n_years: self.n_years,
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            values,
            missing,
        }
    }

    /// Rows restricted to `range` (which must lie inside the matrix span).
    pub fn subrange(&self, range: &YearRange) -> Result<ProxyMatrix> {
        if !self.range().contains_range(range) {
            return Err(Error::Coverage(format!(
                "range {range} is outside matrix span {}",
                self.range()
            )));
        }
        let p = self.n_series();
        let a = (range.start - self.start_year) as usize * p;
        let b = a + range.len() * p;
        Ok(ProxyMatrix {
            start_year: range.start,
            n_years: range.len(),
            columns: self.columns.clone(),
            values: self.values[a..b].to_vec(),
            missing: self.missing[a..b].to_vec(),
        })
    }

    /// Column-wise concatenation of two matrices over the same span.
    pub fn hstack(&self, other: &ProxyMatrix) -> Result<ProxyMatrix> {
        if self.range() != other.range() {
            return Err(Error::Format("cannot stack matrices with different spans".into()));
        }
        let (p, q) = (self.n_series(), other.n_series());
        let mut values = Vec::with_capacity(self.n_years * (p + q));
        let mut missing = Vec::with_capacity(self.n_years * (p + q));
        for i in 0..self.n_years {
            values.extend_from_slice(&self.values[i * p..(i + 1) * p]);
            values.extend_from_slice(&other.values[i * q..(i + 1) * q]);
            missing.extend_from_slice(&self.missing[i * p..(i + 1) * p]);
            missing.extend_from_slice(&other.missing[i * q..(i + 1) * q]);
        }
        let mut columns = self.columns.clone();
        columns.extend(other.columns.iter().cloned());
        Ok(ProxyMatrix {
            start_year: self.start_year,
            n_years: self.n_years,
            columns,
            values,
            missing,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(name: &str) -> SeriesMeta {
        SeriesMeta::new(name, SeriesKind::Proxy, 1000)
    }

    #[test]
    fn columns_round_trip_through_series() {
        let a = AnnualSeries::from_options(1000, vec![Some(1.0), None, Some(3.0)]).unwrap();
        let b = AnnualSeries::new(1000, vec![4.0, 5.0, 6.0]).unwrap();
        let m = ProxyMatrix::from_series(vec![meta("a"), meta("b")], &[a.clone(), b.clone()]).unwrap();
        assert_eq!(m.column(0), a);
        assert_eq!(m.column(1), b);
        assert_eq!(m.get(1001, 0), None);
        assert!(!m.row_complete(1001, &[0, 1]));
        assert!(m.row_complete(1001, &[1]));
    }

    #[test]
    fn rejects_bad_latitude() {
        let bad = meta("x").with_location(91.0, 0.0);
        assert!(ProxyMatrix::from_rows(0, vec![bad], 1, vec![0.0], vec![false]).is_err());
    }

    #[test]
    fn hstack_and_select() {
        let a = AnnualSeries::new(0, vec![1.0, 2.0]).unwrap();
        let b = AnnualSeries::new(0, vec![3.0, 4.0]).unwrap();
        let m1 = ProxyMatrix::from_series(vec![meta("a")], &[a]).unwrap();
        let m2 = ProxyMatrix::from_series(vec![meta("b")], std::slice::from_ref(&b)).unwrap();
        let m = m1.hstack(&m2).unwrap();
        assert_eq!(m.n_series(), 2);
        assert_eq!(m.select_columns(&[1]).column(0), b);
        assert_eq!(m.subrange(&YearRange::new(1, 1).unwrap()).unwrap().get(1, 1), Some(4.0));
    }
}
