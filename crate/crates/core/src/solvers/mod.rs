//! Reconstruction methods and a uniform prediction surface.

mod arma;
mod cps;
mod cv;
mod enet;
mod linear;
mod optim;
mod pca;
mod training;

pub use arma::{fit_arma, is_stationary, ArmaModel};
pub use cps::{fit_composite_regression, fit_cps, CpsModel, WeightMode};
pub use cv::{fit_lasso_cv, select_lambda_cv, CvConfig, CvPoint, CvResult, LambdaGrid};
pub use enet::{
    enet_path, fit_elastic_net, fit_elastic_net_with, fit_lasso, lambda_max, lambda_max_with, tingley_lambda,
    EnetOptions,
};
pub use linear::{fit_intercept, fit_ols, FitDiagnostics, LinearMethod, LinearModel, Penalty};
pub use pca::{fit_pc_ols, pca_decompose, residual_orthogonality, PcBasis, ScoreMatrix};
pub use training::TrainingSet;

use serde::{Deserialize, Serialize};

use crate::data::{AnnualSeries, ProxyMatrix, YearRange};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedModel {
    Linear(LinearModel),
    Cps(CpsModel),
    Arma(ArmaModel),
}

impl FittedModel {
    pub fn tag(&self) -> &'static str {
        match self {
            FittedModel::Linear(m) => m.method.as_str(),
            FittedModel::Cps(_) => "cps",
            FittedModel::Arma(_) => "arma",
        }
    }
}

/// What a model predicts from.
#[derive(Clone, Copy, Debug)]
pub enum PredictInput<'a> {
    Proxies(&'a ProxyMatrix),
    /// The target's own observed history (ARMA).
    History(&'a AnnualSeries),
}

pub fn predict(model: &FittedModel, input: PredictInput<'_>, years: &YearRange) -> Result<AnnualSeries> {
    match (model, input) {
        (FittedModel::Linear(m), PredictInput::Proxies(x)) => m.predict(x, years),
        (FittedModel::Linear(m), PredictInput::History(_)) if m.method == LinearMethod::Intercept => {
            linear::finish_prediction(years, years.years().map(|_| Some(m.intercept)).collect())
        }
        (FittedModel::Cps(m), PredictInput::Proxies(x)) => m.predict(x, years),
        (FittedModel::Arma(m), PredictInput::History(h)) => m.predict(h, years),
        (m, _) => Err(Error::Config(format!("model '{}' cannot predict from this input", m.tag()))),
    }
}

pub const MODEL_FORMAT: &str = "proxy-recon/model";
pub const MODEL_VERSION: u32 = 1;

/// Versioned on-disk form of a fitted model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format: String,
    pub version: u32,
    pub method: String,
    /// SHA-256 of the training inputs.
    pub input_fingerprint: String,
    pub model: FittedModel,
}

impl ModelDocument {
    pub fn new(model: FittedModel, input_fingerprint: String) -> Self {
        ModelDocument {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            method: model.tag().into(),
            input_fingerprint,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT || doc.version != MODEL_VERSION {
            return Err(Error::Format(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        Ok(doc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SeriesKind, SeriesMeta};
    use crate::rng::Seed;
    use rand::Rng;

    fn proxies(start: i32, n: usize, p: usize, seed: u64) -> ProxyMatrix {
        let mut rng = Seed::new(seed).rng();
        let metas = (0..p)
            .map(|j| SeriesMeta::new(format!("p{j}"), SeriesKind::Proxy, start).with_location(40.0, 0.0))
            .collect();
        let vals = (0..n * p).map(|_| rng.random::<f64>()).collect();
        ProxyMatrix::from_rows(start, metas, n, vals, vec![false; n * p]).unwrap()
    }

    #[test]
    fn lasso_backcast_has_full_length() {
        let px = proxies(998, 1001, 5, 1);
        let target = AnnualSeries::new(
            1850,
            (1850..=1998).map(|y| px.get(y, 0).unwrap() * 2.0 + px.get(y, 3).unwrap()).collect(),
        )
        .unwrap();
        let years: Vec<i32> = (1850..=1998).collect();
        let ts = TrainingSet::from_matrix(&px, &target, &years).unwrap();
        let m = fit_lasso(&ts, 0.1 * lambda_max(&ts).unwrap()).unwrap();
        let back = predict(
            &FittedModel::Linear(m),
            PredictInput::Proxies(&px),
            &YearRange::new(998, 1849).unwrap(),
        )
        .unwrap();
        assert_eq!(back.len(), 852);
        assert!(!back.has_missing());
    }

    #[test]
    fn coverage_error_outside_inputs() {
        let px = proxies(1900, 50, 2, 2);
        let y = AnnualSeries::new(1900, (0..50).map(|i| i as f64).collect()).unwrap();
        let ts = TrainingSet::from_matrix(&px, &y, &(1900..1950).collect::<Vec<_>>()).unwrap();
        let m = FittedModel::Linear(fit_ols(&ts).unwrap());
        let r = predict(&m, PredictInput::Proxies(&px), &YearRange::new(1000, 1010).unwrap());
        assert!(matches!(r, Err(Error::Coverage(_))));
    }

    #[test]
    fn document_round_trip() {
        let px = proxies(1900, 40, 3, 3);
        let y = AnnualSeries::new(1900, (0..40).map(|i| (i as f64).sin()).collect()).unwrap();
        let ts = TrainingSet::from_matrix(&px, &y, &(1900..1940).collect::<Vec<_>>()).unwrap();
        let cps = fit_cps(&ts, px.columns(), WeightMode::LatitudeCosine).unwrap();
        let doc = ModelDocument::new(FittedModel::Cps(cps), ts.fingerprint());
        let back = ModelDocument::from_json(&doc.to_json().unwrap()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.method, "cps");
    }

    #[test]
    fn wrong_input_kind_is_rejected() {
        let y = AnnualSeries::new(0, vec![1.0, 2.0, 3.0, 2.0, 1.0]).unwrap();
        let m = FittedModel::Arma(fit_arma(&y, 0, 0).unwrap());
        let px = proxies(0, 5, 1, 1);
        assert!(predict(&m, PredictInput::Proxies(&px), &YearRange::new(0, 4).unwrap()).is_err());
    }
}
