use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive span of integer years (AD).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if end < start {
            return Err(Error::Config(format!("year range {start}-{end} is empty")));
        }
        Ok(YearRange { start, end })
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn contains(&self, year: i32) -> bool {
        year >= self.start && year <= self.end
    }

    pub fn contains_range(&self, other: &YearRange) -> bool {
        self.contains(other.start) && self.contains(other.end)
    }

    pub fn intersect(&self, other: &YearRange) -> Option<YearRange> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start <= end).then_some(YearRange { start, end })
    }

    pub fn years(&self) -> impl Iterator<Item = i32> {
        self.start..=self.end
    }
}

impl std::fmt::Display for YearRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}-{}", self.start, self.end)
    }
}

/// Year-indexed scalar series with an explicit missing mask.
///
/// Masked entries store `0.0`; the mask is authoritative and every statistic
/// skips masked positions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnualSeries {
    start_year: i32,
    values: Vec<f64>,
    missing: Vec<bool>,
}

impl AnnualSeries {
    pub fn new(start_year: i32, values: Vec<f64>) -> Result<Self> {
        let missing = vec![false; values.len()];
        Self::with_mask(start_year, values, missing)
    }

    pub fn with_mask(start_year: i32, mut values: Vec<f64>, missing: Vec<bool>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InsufficientData("series must have at least one entry".into()));
        }
        if values.len() != missing.len() {
            return Err(Error::Format(format!(
                "series has {} values but {} mask bits",
                values.len(),
                missing.len()
            )));
        }
        for (v, &m) in values.iter_mut().zip(&missing) {
            if m {
                *v = 0.0;
            } else if !v.is_finite() {
                return Err(Error::Numeric("non-finite value in series".into()));
            }
        }
        Ok(AnnualSeries {
            start_year,
            values,
            missing,
        })
    }

    pub fn from_options(start_year: i32, values: Vec<Option<f64>>) -> Result<Self> {
        let missing = values.iter().map(Option::is_none).collect();
        let values = values.into_iter().map(|v| v.unwrap_or(0.0)).collect();
        Self::with_mask(start_year, values, missing)
    }

    pub fn start_year(&self) -> i32 {
        self.start_year
    }

    pub fn end_year(&self) -> i32 {
        self.start_year + self.values.len() as i32 - 1
    }

    pub fn range(&self) -> YearRange {
        YearRange {
            start: self.start_year,
            end: self.end_year(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Raw storage; masked slots hold `0.0`.
    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn missing_mask(&self) -> &[bool] {
        &self.missing
    }

    pub fn has_missing(&self) -> bool {
        self.missing.iter().any(|&m| m)
    }

    pub fn get(&self, year: i32) -> Option<f64> {
        let idx = year.checked_sub(self.start_year)?;
        if idx < 0 {
            return None;
        }
        let idx = idx as usize;
        match self.missing.get(idx) {
            Some(false) => Some(self.values[idx]),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i32, Option<f64>)> + '_ {
        self.values
            .iter()
            .zip(&self.missing)
            .enumerate()
            .map(move |(i, (&v, &m))| (self.start_year + i as i32, (!m).then_some(v)))
    }

    /// Non-missing values whose years fall in `range`.
    pub fn observed_in(&self, range: &YearRange) -> Vec<f64> {
        self.iter()
            .filter(|(y, _)| range.contains(*y))
            .filter_map(|(_, v)| v)
            .collect()
    }

    pub fn observed(&self) -> Vec<f64> {
        self.observed_in(&self.range())
    }

    /// Mean over the non-missing entries in `range`.
    pub fn mean_over(&self, range: &YearRange) -> Result<f64> {
        let vals = self.observed_in(range);
        if vals.is_empty() {
            return Err(Error::DegenerateReference {
                start: range.start,
                end: range.end,
            });
        }
        Ok(crate::stats::mean(&vals))
    }

    /// Applies `f` to every observed value, keeping the mask.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> AnnualSeries {
        let values = self
            .values
            .iter()
            .zip(&self.missing)
            .map(|(&v, &m)| if m { 0.0 } else { f(v) })
            .collect();
        AnnualSeries {
            start_year: self.start_year,
            values,
            missing: self.missing.clone(),
        }
    }

    pub fn shifted(&self, c: f64) -> AnnualSeries {
        self.map(|v| v + c)
    }

    /// Restriction to `range`, which must lie inside the series.
    pub fn subseries(&self, range: &YearRange) -> Result<AnnualSeries> {
        if !self.range().contains_range(range) {
            return Err(Error::Coverage(format!(
                "range {range} is outside series span {}",
                self.range()
            )));
        }
        let a = (range.start - self.start_year) as usize;
        let b = a + range.len();
        Ok(AnnualSeries {
            start_year: range.start,
            values: self.values[a..b].to_vec(),
            missing: self.missing[a..b].to_vec(),
        })
    }

    /// Copy with the entries for `years` masked out.
    pub fn masked(&self, range: &YearRange) -> AnnualSeries {
        let mut out = self.clone();
        for (i, (v, m)) in out.values.iter_mut().zip(out.missing.iter_mut()).enumerate() {
            if range.contains(self.start_year + i as i32) {
                *v = 0.0;
                *m = true;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_is_authoritative() {
        let s = AnnualSeries::from_options(2000, vec![Some(1.0), None, Some(3.0)]).unwrap();
        assert_eq!(s.get(2001), None);
        assert_eq!(s.get(2002), Some(3.0));
        assert_eq!(s.get(1999), None);
        assert_eq!(s.get(2003), None);
        assert_eq!(s.observed(), vec![1.0, 3.0]);
        assert_eq!(s.end_year(), 2002);
    }

    #[test]
    fn rejects_length_mismatch_and_empty() {
        assert!(AnnualSeries::with_mask(0, vec![1.0], vec![]).is_err());
        assert!(AnnualSeries::new(0, vec![]).is_err());
        assert!(AnnualSeries::new(0, vec![f64::NAN]).is_err());
    }

    #[test]
    fn mean_over_empty_reference_fails() {
        let s = AnnualSeries::from_options(2000, vec![None, Some(2.0)]).unwrap();
        let r = YearRange::new(2000, 2000).unwrap();
        assert!(matches!(s.mean_over(&r), Err(Error::DegenerateReference { .. })));
    }

    #[test]
    fn masking_a_block() {
        let s = AnnualSeries::new(10, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = s.masked(&YearRange::new(11, 12).unwrap());
        assert_eq!(m.observed(), vec![1.0, 4.0]);
    }
}
