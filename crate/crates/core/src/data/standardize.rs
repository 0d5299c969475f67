use super::series::{AnnualSeries, YearRange};
use crate::error::{Error, Result};
use crate::stats;

/// Rescales `series` to mean 0 and sample sd 1 over `period`.
pub fn standardize(series: &AnnualSeries, period: &YearRange) -> Result<AnnualSeries> {
    let vals = series.observed_in(period);
    if vals.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 observations in {period} to standardize, found {}",
            vals.len()
        )));
    }
    let m = stats::mean(&vals);
    let sd = stats::sample_sd(&vals);
    if !(sd > 0.0) || sd <= 1e-300 {
        return Err(Error::DegenerateSeries(format!("zero variance over {period}")));
    }
    Ok(series.map(|v| (v - m) / sd))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_case() {
        let s = AnnualSeries::new(0, vec![0.0, 2.0]).unwrap();
        let z = standardize(&s, &s.range()).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((z.get(0).unwrap() + h).abs() < 1e-15);
        assert!((z.get(1).unwrap() - h).abs() < 1e-15);
    }

    #[test]
    fn idempotent_on_standardized_input() {
        let s = AnnualSeries::new(0, vec![1.0, 4.0, -2.0, 7.5, 0.25]).unwrap();
        let z = standardize(&s, &s.range()).unwrap();
        let zz = standardize(&z, &s.range()).unwrap();
        for (a, b) in z.observed().iter().zip(zz.observed()) {
            assert!((a - b).abs() < 1e-12);
        }
        let vals = z.observed();
        assert!(stats::mean(&vals).abs() < 1e-12);
        assert!((stats::sample_sd(&vals) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let s = AnnualSeries::new(0, vec![3.0; 5]).unwrap();
        assert!(matches!(
            standardize(&s, &s.range()),
            Err(Error::DegenerateSeries(_))
        ));
    }
}
