use serde::{Deserialize, Serialize};

use crate::data::{
    center_anomaly, center_fitted_bug, CenteringMode, CenteringSpec, AnnualSeries, ProxyMatrix, YearRange,
};
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::solvers::{
    self, fit_arma, fit_composite_regression, fit_cps, fit_elastic_net_with, fit_intercept, fit_ols, fit_pc_ols,
    lambda_max_with, select_lambda_cv, CvConfig, EnetOptions, FittedModel, LambdaGrid, PredictInput, TrainingSet,
    WeightMode,
};
use crate::stats;

/// How a penalized fit chooses λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LambdaRule {
    Fixed { value: f64 },
    /// `fraction · λ_max` of the training data (0.05 is the fixed-fraction rule).
    FractionOfMax { fraction: f64 },
    /// Repeated k-fold cross-validation.
    Cv { folds: usize, repetitions: usize, grid: LambdaGrid },
}

impl LambdaRule {
    pub fn tingley() -> Self {
        LambdaRule::FractionOfMax { fraction: 0.05 }
    }

    /// Label suffix: none for cross-validation, the default rule.
    fn suffix(&self) -> String {
        match self {
            LambdaRule::Cv { .. } => String::new(),
            LambdaRule::FractionOfMax { fraction } if *fraction == 0.05 => "_tingley".into(),
            LambdaRule::FractionOfMax { fraction } => format!("_fraction({fraction})"),
            LambdaRule::Fixed { value } => format!("_fixed({value})"),
        }
    }

    pub fn cv_default() -> Self {
        LambdaRule::Cv {
            folds: 5,
            repetitions: 10,
            grid: LambdaGrid::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodConfig {
    Lasso { lambda: LambdaRule },
    NoncentralLasso { lambda: LambdaRule },
    ElasticNet { lambda: LambdaRule, alpha: f64 },
    PcOls { k: usize, groups: Option<Vec<usize>> },
    Cps { weight_mode: WeightMode },
    CompositeRegression,
    Ols,
    Arma { p: usize, q: usize },
    Intercept,
}

impl MethodConfig {
    pub fn label(&self) -> String {
        match self {
            MethodConfig::Lasso { lambda } => format!("lasso{}", lambda.suffix()),
            MethodConfig::NoncentralLasso { lambda } => format!("noncentral_lasso{}", lambda.suffix()),
            MethodConfig::ElasticNet { alpha, .. } => format!("elastic_net({alpha})"),
            MethodConfig::PcOls { k, groups: None } => format!("ols_pc{k}"),
            MethodConfig::PcOls { k, groups: Some(_) } => format!("ols_grouped_pc{k}"),
            MethodConfig::Cps { weight_mode } => match weight_mode {
                WeightMode::LatitudeCosine => "cps".into(),
                WeightMode::AbsCorrelation => "cps_abs_corr".into(),
            },
            MethodConfig::CompositeRegression => "composite_regression".into(),
            MethodConfig::Ols => "ols".into(),
            MethodConfig::Arma { p, q } => format!("arma({p},{q})"),
            MethodConfig::Intercept => "intercept".into(),
        }
    }

    /// Whether the method predicts from its own target history.
    pub fn uses_history(&self) -> bool {
        matches!(self, MethodConfig::Arma { .. } | MethodConfig::Intercept)
    }
}

/// A method plus the anomaly-centering step applied before scoring.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub method: MethodConfig,
    pub centering: Option<CenteringSpec>,
}

impl Pipeline {
    pub fn new(method: MethodConfig) -> Self {
        Pipeline {
            method,
            centering: None,
        }
    }

    pub fn with_centering(mut self, spec: CenteringSpec) -> Self {
        self.centering = Some(spec);
        self
    }
}

/// A fitted model and the fingerprint of exactly what it was trained on.
pub struct Fitted {
    pub model: FittedModel,
    pub fingerprint: String,
    /// Training history (target with held-out years masked).
    pub history: AnnualSeries,
}

/// Fits `method` on the calibration years not in `holdout`.
pub fn fit_method(
    method: &MethodConfig,
    proxies: &ProxyMatrix,
    target: &AnnualSeries,
    calibration: &YearRange,
    holdout: Option<&YearRange>,
    seed: Seed,
) -> Result<Fitted> {
    let window = target.subseries(calibration)?;
    let history = match holdout {
        Some(b) => window.masked(b),
        None => window,
    };
    let train_years: Vec<i32> = history.iter().filter(|(_, v)| v.is_some()).map(|(y, _)| y).collect();
    if train_years.len() < 2 {
        return Err(Error::Coverage(format!(
            "no effective training years in {calibration} outside the holdout"
        )));
    }
    if method.uses_history() {
        let fingerprint = series_fingerprint(&history);
        let model = match method {
            MethodConfig::Arma { p, q } => FittedModel::Arma(fit_arma(&history, *p, *q)?),
            _ => FittedModel::Linear(fit_intercept(&history, calibration)?),
        };
        return Ok(Fitted {
            model,
            fingerprint,
            history,
        });
    }
    let ts = TrainingSet::from_matrix(proxies, &history, &train_years)?;
    let fingerprint = ts.fingerprint();
    let penalized = |lambda: &LambdaRule, opts: EnetOptions| -> Result<FittedModel> {
        let value = match lambda {
            LambdaRule::Fixed { value } => *value,
            LambdaRule::FractionOfMax { fraction } => fraction * lambda_max_with(&ts, &opts)?,
            LambdaRule::Cv {
                folds,
                repetitions,
                grid,
            } => {
                let cfg = CvConfig {
                    folds: *folds,
                    repetitions: *repetitions,
                    grid: grid.clone(),
                    options: opts,
                };
                select_lambda_cv(&ts, &cfg, seed)?.lambda
            }
        };
        Ok(FittedModel::Linear(fit_elastic_net_with(&ts, value, &opts)?))
    };
    let model = match method {
        MethodConfig::Lasso { lambda } => penalized(lambda, EnetOptions::lasso())?,
        MethodConfig::NoncentralLasso { lambda } => penalized(lambda, EnetOptions::noncentral_lasso())?,
        MethodConfig::ElasticNet { lambda, alpha } => penalized(lambda, EnetOptions::elastic_net(*alpha))?,
        MethodConfig::PcOls { k, groups } => FittedModel::Linear(fit_pc_ols(&ts, *k, groups.as_deref())?),
        MethodConfig::Cps { weight_mode } => FittedModel::Cps(fit_cps(&ts, proxies.columns(), *weight_mode)?),
        MethodConfig::CompositeRegression => FittedModel::Linear(fit_composite_regression(&ts)?),
        MethodConfig::Ols => FittedModel::Linear(fit_ols(&ts)?),
        MethodConfig::Arma { .. } | MethodConfig::Intercept => unreachable!("handled above"),
    };
    Ok(Fitted {
        model,
        fingerprint,
        history,
    })
}

pub(crate) fn series_fingerprint(s: &AnnualSeries) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    for (y, v) in s.iter() {
        h.update(y.to_le_bytes());
        match v {
            Some(v) => h.update(v.to_bits().to_le_bytes()),
            None => h.update(b"-"),
        }
    }
    hex::encode(h.finalize())
}

/// Result of scoring one holdout block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldoutOutcome {
    pub rmse: f64,
    pub n_years: usize,
    pub fingerprint: String,
}

fn hull(a: &YearRange, b: &YearRange) -> YearRange {
    YearRange {
        start: a.start.min(b.start),
        end: a.end.max(b.end),
    }
}

/// Trains on calibration minus `block` and scores the block.
///
/// With anomaly centering both target and predictions are expressed relative
/// to the observed target's reference mean; with the erroneous variant the
/// predictions are instead centred on their own reference mean.
pub fn holdout_rmse(
    pipeline: &Pipeline,
    proxies: &ProxyMatrix,
    target: &AnnualSeries,
    block: &YearRange,
    calibration: &YearRange,
    seed: Seed,
) -> Result<HoldoutOutcome> {
    if !calibration.contains_range(block) {
        return Err(Error::Config(format!("block {block} is not inside calibration {calibration}")));
    }
    let fitted = fit_method(&pipeline.method, proxies, target, calibration, Some(block), seed)?;
    let span = match &pipeline.centering {
        Some(c) if c.mode != CenteringMode::None => hull(block, &c.reference),
        _ => *block,
    };
    let input = if pipeline.method.uses_history() {
        PredictInput::History(&fitted.history)
    } else {
        PredictInput::Proxies(proxies)
    };
    let pred = solvers::predict(&fitted.model, input, &span)?;
    let (pred, obs) = match &pipeline.centering {
        None => (pred, target.clone()),
        Some(c) => match c.mode {
            CenteringMode::None => (pred, target.clone()),
            CenteringMode::AnomalyVsObserved => {
                let m = target.mean_over(&c.reference)?;
                (pred.shifted(-m), center_anomaly(target, c)?)
            }
            CenteringMode::AnomalyVsFittedBug => {
                let good = CenteringSpec::observed(c.reference);
                (center_fitted_bug(&pred, c)?.series, center_anomaly(target, &good)?)
            }
        },
    };
    let errors: Vec<f64> = block
        .years()
        .filter_map(|y| Some(pred.get(y)? - obs.get(y)?))
        .collect();
    if errors.is_empty() {
        return Err(Error::Coverage(format!("no scorable years in block {block}")));
    }
    Ok(HoldoutOutcome {
        rmse: stats::rmse(errors.iter().copied()),
        n_years: errors.len(),
        fingerprint: fitted.fingerprint,
    })
}
