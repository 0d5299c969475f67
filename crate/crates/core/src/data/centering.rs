//! Anomaly centering, including the erroneous fitted-value variant.
//!
//! The correct procedure subtracts the *observed* target mean over the
//! reference period from both target and predictions. The erroneous one
//! subtracts the mean of each model's own fitted values over the reference
//! period, which leaves a constant bias equal to the reference-period mean
//! residual.

use serde::{Deserialize, Serialize};

use super::series::{AnnualSeries, YearRange};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CenteringMode {
    None,
    AnomalyVsObserved,
    /// Reproduces the erroneous fitted-value centering.
    AnomalyVsFittedBug,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CenteringSpec {
    pub reference: YearRange,
    pub mode: CenteringMode,
}

impl CenteringSpec {
    pub fn observed(reference: YearRange) -> Self {
        CenteringSpec {
            reference,
            mode: CenteringMode::AnomalyVsObserved,
        }
    }

    pub fn fitted_bug(reference: YearRange) -> Self {
        CenteringSpec {
            reference,
            mode: CenteringMode::AnomalyVsFittedBug,
        }
    }
}

/// Output of [`center_fitted_bug`], labelled as the erroneous procedure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BuggyCentered {
    pub series: AnnualSeries,
    pub reference_mean: f64,
    pub procedure: String,
}

pub const FITTED_BUG_LABEL: &str =
    "erroneous: centered on the mean of the model's own fitted values over the reference period";

fn expect_mode(spec: &CenteringSpec, mode: CenteringMode) -> Result<()> {
    if spec.mode != mode {
        return Err(Error::Config(format!(
            "centering spec has mode {:?}, operation needs {:?}",
            spec.mode, mode
        )));
    }
    Ok(())
}

/// `series - mean(series over reference)`.
pub fn center_anomaly(series: &AnnualSeries, spec: &CenteringSpec) -> Result<AnnualSeries> {
    expect_mode(spec, CenteringMode::AnomalyVsObserved)?;
    let m = series.mean_over(&spec.reference)?;
    Ok(series.shifted(-m))
}

/// Correct centering of model predictions: subtract the observed target's
/// reference-period mean.
pub fn center_predictions(
    predictions: &AnnualSeries,
    observed: &AnnualSeries,
    spec: &CenteringSpec,
) -> Result<AnnualSeries> {
    expect_mode(spec, CenteringMode::AnomalyVsObserved)?;
    let m = observed.mean_over(&spec.reference)?;
    Ok(predictions.shifted(-m))
}

/// `predictions - mean(predictions over reference)`: the documented error.
pub fn center_fitted_bug(predictions: &AnnualSeries, spec: &CenteringSpec) -> Result<BuggyCentered> {
    expect_mode(spec, CenteringMode::AnomalyVsFittedBug)?;
    if !predictions.range().contains_range(&spec.reference) {
        return Err(Error::Coverage(format!(
            "predictions span {} does not cover reference {}",
            predictions.range(),
            spec.reference
        )));
    }
    let m = predictions.mean_over(&spec.reference)?;
    Ok(BuggyCentered {
        series: predictions.shifted(-m),
        reference_mean: m,
        procedure: FITTED_BUG_LABEL.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn yr(a: i32, b: i32) -> YearRange {
        YearRange::new(a, b).unwrap()
    }

    #[test]
    fn constant_series_goes_to_zero() {
        let s = AnnualSeries::new(1900, vec![5.0; 20]).unwrap();
        let c = center_anomaly(&s, &CenteringSpec::observed(yr(1905, 1910))).unwrap();
        assert!(c.observed().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn three_values_full_reference() {
        let s = AnnualSeries::new(0, vec![1.0, 2.0, 3.0]).unwrap();
        let c = center_anomaly(&s, &CenteringSpec::observed(yr(0, 2))).unwrap();
        assert_eq!(c.observed(), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn csm_style_reference_has_zero_mean() {
        let mut rng = crate::rng::Seed::new(3).rng();
        let vals: Vec<f64> = (0..125).map(|_| rng.random::<f64>() * 3.0 - 0.5).collect();
        let s = AnnualSeries::new(1856, vals).unwrap();
        let spec = CenteringSpec::observed(yr(1900, 1980));
        let c = center_anomaly(&s, &spec).unwrap();
        assert!(c.mean_over(&spec.reference).unwrap().abs() < 1e-12);
        let twice = center_anomaly(&c, &spec).unwrap();
        for (a, b) in twice.observed().iter().zip(c.observed()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_overlap_is_degenerate() {
        let s = AnnualSeries::from_options(0, vec![Some(1.0), None]).unwrap();
        let err = center_anomaly(&s, &CenteringSpec::observed(yr(1, 1))).unwrap_err();
        assert!(matches!(err, Error::DegenerateReference { .. }));
        let err = center_anomaly(&s, &CenteringSpec::observed(yr(10, 20))).unwrap_err();
        assert!(matches!(err, Error::DegenerateReference { .. }));
    }

    #[test]
    fn wrong_mode_is_rejected() {
        let s = AnnualSeries::new(0, vec![1.0, 2.0]).unwrap();
        assert!(center_anomaly(&s, &CenteringSpec::fitted_bug(yr(0, 1))).is_err());
        assert!(center_fitted_bug(&s, &CenteringSpec::observed(yr(0, 1))).is_err());
    }

    #[test]
    fn bug_matches_correct_when_predictions_equal_target() {
        let o = AnnualSeries::new(0, vec![0.3, 1.0, -2.0, 4.0]).unwrap();
        let r = yr(1, 3);
        let bug = center_fitted_bug(&o, &CenteringSpec::fitted_bug(r)).unwrap();
        let good = center_anomaly(&o, &CenteringSpec::observed(r)).unwrap();
        assert_eq!(bug.series, good);
        assert_eq!(bug.procedure, FITTED_BUG_LABEL);
    }

    #[test]
    fn constant_bias_is_absorbed_by_the_bug() {
        let o = AnnualSeries::new(0, vec![0.3, 1.0, -2.0, 4.0]).unwrap();
        let p = o.shifted(2.5);
        let r = yr(0, 3);
        let bug = center_fitted_bug(&p, &CenteringSpec::fitted_bug(r)).unwrap();
        let good = center_anomaly(&o, &CenteringSpec::observed(r)).unwrap();
        for (a, b) in bug.series.observed().iter().zip(good.observed()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn bug_differs_by_reference_mean_residual() {
        // random instance; identity: bug - correct = meanref(O) - meanref(P)
        let mut rng = crate::rng::Seed::new(11).rng();
        let n = 60;
        let o: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let p: Vec<f64> = o.iter().map(|v| 0.7 * v + rng.random::<f64>() * 0.2).collect();
        let o = AnnualSeries::new(1900, o).unwrap();
        let p = AnnualSeries::new(1900, p).unwrap();
        let r = yr(1920, 1950);
        let resid: Vec<f64> = r.years().map(|y| o.get(y).unwrap() - p.get(y).unwrap()).collect();
        let expected = resid.iter().sum::<f64>() / resid.len() as f64;
        assert!(expected.abs() > 1e-3);
        let bug = center_fitted_bug(&p, &CenteringSpec::fitted_bug(r)).unwrap();
        let good = center_predictions(&p, &o, &CenteringSpec::observed(r)).unwrap();
        for y in p.range().years() {
            let d = bug.series.get(y).unwrap() - good.get(y).unwrap();
            assert!((d - expected).abs() < 1e-12, "year {y}: {d} vs {expected}");
        }
    }
}
