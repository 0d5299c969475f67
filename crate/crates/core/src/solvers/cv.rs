use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::enet::{enet_path, lambda_max_with, EnetOptions};
use super::linear::LinearModel;
use super::training::TrainingSet;
use crate::error::{Error, Result};
use crate::rng::Seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LambdaGrid {
    /// `n` log-spaced values from λ_max down to `min_ratio · λ_max`.
    Relative { n: usize, min_ratio: f64 },
    Explicit { values: Vec<f64> },
}

impl Default for LambdaGrid {
    fn default() -> Self {
        LambdaGrid::Relative {
            n: 50,
            min_ratio: 1e-3,
        }
    }
}

impl LambdaGrid {
    /// Grid values in decreasing order.
    pub fn values(&self, ts: &TrainingSet, opts: &EnetOptions) -> Result<Vec<f64>> {
        let mut v = match self {
            LambdaGrid::Relative { n, min_ratio } => {
                if *n == 0 {
                    return Err(Error::Config("empty lambda grid".into()));
                }
                if !(*min_ratio > 0.0 && *min_ratio < 1.0) {
                    return Err(Error::Config(format!("grid ratio {min_ratio} outside (0, 1)")));
                }
                let top = lambda_max_with(ts, opts)?;
                if *n == 1 {
                    vec![top]
                } else {
                    (0..*n)
                        .map(|k| top * min_ratio.powf(k as f64 / (*n - 1) as f64))
                        .collect()
                }
            }
            LambdaGrid::Explicit { values } => {
                if values.is_empty() {
                    return Err(Error::Config("empty lambda grid".into()));
                }
                values.clone()
            }
        };
        v.sort_by(|a, b| b.total_cmp(a));
        v.dedup();
        Ok(v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub repetitions: usize,
    pub grid: LambdaGrid,
    pub options: EnetOptions,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            repetitions: 10,
            grid: LambdaGrid::default(),
            options: EnetOptions::lasso(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvPoint {
    pub lambda: f64,
    pub mean_mse: f64,
    /// Standard error of the mean over folds × repetitions.
    pub se: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub lambda: f64,
    pub curve: Vec<CvPoint>,
    pub folds: usize,
    pub repetitions: usize,
}

/// Repeated k-fold cross-validation over a λ grid.
///
/// Each repetition shuffles the rows with its own child seed; predictors are
/// rescaled inside every training fold. The chosen λ minimizes the mean
/// held-out squared error; ties go to the larger λ.
pub fn select_lambda_cv(ts: &TrainingSet, cfg: &CvConfig, seed: Seed) -> Result<CvResult> {
    if cfg.folds < 2 || cfg.repetitions == 0 {
        return Err(Error::Config(format!(
            "cross-validation needs ≥ 2 folds and ≥ 1 repetition (got {} × {})",
            cfg.folds, cfg.repetitions
        )));
    }
    let n = ts.n_obs();
    if n < cfg.folds {
        return Err(Error::InsufficientData(format!(
            "{n} calibration rows for {} folds",
            cfg.folds
        )));
    }
    let grid = cfg.grid.values(ts, &cfg.options)?;
    let jobs: Vec<(usize, usize)> = (0..cfg.repetitions)
        .flat_map(|r| (0..cfg.folds).map(move |f| (r, f)))
        .collect();
    let assignments: Vec<Vec<usize>> = (0..cfg.repetitions)
        .map(|r| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut seed.derive(r as u64).rng());
            let mut fold = vec![0; n];
            for (pos, &i) in idx.iter().enumerate() {
                fold[i] = pos % cfg.folds;
            }
            fold
        })
        .collect();
    let fold_mse: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(r, f)| {
            let train: Vec<usize> = (0..n).filter(|&i| assignments[r][i] != f).collect();
            let test: Vec<usize> = (0..n).filter(|&i| assignments[r][i] == f).collect();
            let sub = ts.subset(&train);
            let held = ts.subset(&test);
            if sub.y.iter().all(|&v| v == sub.y[0]) {
                // constant fold response: every λ gives the fold mean
                let e = held.y.iter().map(|v| (v - sub.y[0]).powi(2)).sum::<f64>() / test.len() as f64;
                return Ok(vec![e; grid.len()]);
            }
            let path = enet_path(&sub, &grid, &cfg.options.for_paths())?;
            Ok(path.iter().map(|m| held_out_mse(m, &held)).collect())
        })
        .collect::<Result<_>>()?;
    let count = fold_mse.len() as f64;
    let curve: Vec<CvPoint> = grid
        .iter()
        .enumerate()
        .map(|(g, &lambda)| {
            let vals: Vec<f64> = fold_mse.iter().map(|v| v[g]).collect();
            let mean = vals.iter().sum::<f64>() / count;
            let var = if count > 1.0 {
                vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1.0)
            } else {
                0.0
            };
            CvPoint {
                lambda,
                mean_mse: mean,
                se: (var / count).sqrt(),
            }
        })
        .collect();
    let best = curve
        .iter()
        .fold(None::<&CvPoint>, |acc, p| match acc {
            Some(b) if p.mean_mse >= b.mean_mse => Some(b),
            _ => Some(p),
        })
        .map(|p| p.lambda)
        .unwrap_or(grid[0]);
    Ok(CvResult {
        lambda: best,
        curve,
        folds: cfg.folds,
        repetitions: cfg.repetitions,
    })
}

fn held_out_mse(m: &LinearModel, held: &TrainingSet) -> f64 {
    let pred = m.predict_training(held);
    pred.iter()
        .zip(held.y.iter())
        .map(|(p, y)| (p - y).powi(2))
        .sum::<f64>()
        / held.n_obs() as f64
}

/// Cross-validates λ, then refits on all rows at the chosen value.
pub fn fit_lasso_cv(ts: &TrainingSet, cfg: &CvConfig, seed: Seed) -> Result<(LinearModel, CvResult)> {
    let cv = select_lambda_cv(ts, cfg, seed)?;
    let model = super::enet::fit_elastic_net_with(ts, cv.lambda, &cfg.options)?;
    Ok((model, cv))
}
