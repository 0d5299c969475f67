use std::fmt::Write as _;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sampler::{BayesPosterior, ParamDraw};
use crate::data::YearRange;
use crate::error::{Error, Result};
use crate::pseudoproxy::normal;
use crate::rng::Seed;
use crate::solvers::ScoreMatrix;
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathMode {
    /// Parameter draws and innovations.
    Total,
    /// Parameters frozen at the posterior mean; innovations only.
    EpsilonOnly,
    /// Parameter draws without innovations (deterministic surfaces).
    BetaOnly,
}

impl PathMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PathMode::Total => "total",
            PathMode::EpsilonOnly => "epsilon_only",
            PathMode::BetaOnly => "beta_only",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEnsemble {
    pub mode: PathMode,
    /// Parameters behind each path (row of `paths`).
    pub parameter_draws: Vec<ParamDraw>,
    /// Paths × years, years ascending.
    pub paths: DMatrix<f64>,
    pub years: YearRange,
    /// Moving-average window already applied (1 = raw).
    pub window: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lower: f64,
    pub upper: f64,
}

impl Band {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

impl PosteriorEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.nrows()
    }

    /// Per-year equal-tailed band across paths.
    pub fn band(&self, level: f64) -> Vec<Band> {
        let lo = (1.0 - level) / 2.0;
        (0..self.paths.ncols())
            .map(|j| {
                let mut col: Vec<f64> = self.paths.column(j).iter().copied().collect();
                col.sort_by(f64::total_cmp);
                Band {
                    lower: stats::quantile_sorted(&col, lo),
                    upper: stats::quantile_sorted(&col, 1.0 - lo),
                }
            })
            .collect()
    }

    pub fn mean_path(&self) -> Vec<f64> {
        (0..self.paths.ncols()).map(|j| self.paths.column(j).mean()).collect()
    }
}

fn pick_draws(post: &BayesPosterior, max_paths: Option<usize>) -> Vec<ParamDraw> {
    let n = post.draws.len();
    match max_paths {
        Some(m) if m > 0 && m < n => (0..m).map(|i| post.draws[i * n / m].clone()).collect(),
        _ => post.draws.clone(),
    }
}

/// Simulates paths backward from the start of the calibration period over
/// `years`, which must end the year before calibration starts. Path `i`
/// draws its innovations from `seed.derive(i)`.
pub fn simulate_paths(
    post: &BayesPosterior,
    pcs: Option<&ScoreMatrix>,
    years: &YearRange,
    mode: PathMode,
    max_paths: Option<usize>,
    seed: Seed,
) -> Result<PosteriorEnsemble> {
    if years.end != post.calibration.start - 1 {
        return Err(Error::Config(format!(
            "backcast years {years} must end the year before calibration starts ({})",
            post.calibration.start
        )));
    }
    let p = post.spec.ar_order;
    let k = post.spec.k;
    let n_years = years.len();
    let pc_rows: Vec<Vec<f64>> = if k > 0 {
        let sc = pcs.ok_or_else(|| Error::Config("PC scores needed for the backcast".into()))?;
        years
            .years()
            .map(|t| {
                sc.row(t)
                    .map(|r| r[..k].to_vec())
                    .ok_or_else(|| Error::Coverage(format!("PC scores missing in {t}")))
            })
            .collect::<Result<_>>()?
    } else {
        vec![Vec::new(); n_years]
    };
    let params = match mode {
        PathMode::EpsilonOnly => vec![post.posterior_mean(); pick_draws(post, max_paths).len()],
        _ => pick_draws(post, max_paths),
    };
    let noisy = mode != PathMode::BetaOnly;
    let rows: Vec<Vec<f64>> = params
        .par_iter()
        .enumerate()
        .map(|(i, d)| {
            let mut rng = seed.derive(i as u64).rng();
            // later values first: buf[0] = y_{t+1}, buf[1] = y_{t+2}
            let mut buf: Vec<f64> = post.anchor.to_vec();
            let mut path = vec![0.0; n_years];
            for j in (0..n_years).rev() {
                let mut v = d.intercept;
                for l in 0..p {
                    v += d.ar[l] * buf[l];
                }
                for (b, x) in d.beta.iter().zip(&pc_rows[j]) {
                    v += b * x;
                }
                if noisy {
                    v += d.sigma * normal(&mut rng);
                }
                path[j] = v;
                if p > 0 {
                    buf.rotate_right(1);
                    buf[0] = v;
                }
            }
            path
        })
        .collect();
    let paths = DMatrix::from_fn(rows.len(), n_years, |i, j| rows[i][j]);
    Ok(PosteriorEnsemble {
        mode,
        parameter_draws: params,
        paths,
        years: *years,
        window: 1,
    })
}

/// Full predictive paths: parameter draws plus innovations.
pub fn backcast_paths(
    post: &BayesPosterior,
    pcs: Option<&ScoreMatrix>,
    years: &YearRange,
    max_paths: Option<usize>,
    seed: Seed,
) -> Result<PosteriorEnsemble> {
    simulate_paths(post, pcs, years, PathMode::Total, max_paths, seed)
}

/// Centered moving average of every path, truncated at the ends.
pub fn smooth_paths(ens: &PosteriorEnsemble, window: usize) -> Result<PosteriorEnsemble> {
    if window.is_multiple_of(2) {
        return Err(Error::Config(format!("smoothing window must be odd, got {window}")));
    }
    let n = ens.paths.ncols();
    if window > n {
        return Err(Error::Config(format!("window {window} longer than the {n}-year path")));
    }
    let h = window / 2;
    let mut out = ens.paths.clone();
    if window > 1 {
        for i in 0..ens.paths.nrows() {
            let mut prefix = vec![0.0; n + 1];
            for j in 0..n {
                prefix[j + 1] = prefix[j] + ens.paths[(i, j)];
            }
            for j in 0..n {
                let a = j.saturating_sub(h);
                let b = (j + h + 1).min(n);
                out[(i, j)] = (prefix[b] - prefix[a]) / (b - a) as f64;
            }
        }
    }
    Ok(PosteriorEnsemble {
        paths: out,
        window: ens.window * window,
        ..ens.clone()
    })
}

/// The three ensembles behind an uncertainty decomposition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub total: PosteriorEnsemble,
    pub epsilon_only: PosteriorEnsemble,
    pub beta_only: PosteriorEnsemble,
}

impl Decomposition {
    pub fn simulate(
        post: &BayesPosterior,
        pcs: Option<&ScoreMatrix>,
        years: &YearRange,
        max_paths: Option<usize>,
        seed: Seed,
    ) -> Result<Self> {
        Ok(Decomposition {
            total: simulate_paths(post, pcs, years, PathMode::Total, max_paths, seed.derive(0))?,
            epsilon_only: simulate_paths(post, pcs, years, PathMode::EpsilonOnly, max_paths, seed.derive(1))?,
            beta_only: simulate_paths(post, pcs, years, PathMode::BetaOnly, max_paths, seed.derive(2))?,
        })
    }

    pub fn smooth(&self, window: usize) -> Result<Self> {
        Ok(Decomposition {
            total: smooth_paths(&self.total, window)?,
            epsilon_only: smooth_paths(&self.epsilon_only, window)?,
            beta_only: smooth_paths(&self.beta_only, window)?,
        })
    }

    /// Bands are always quantiles of the (possibly smoothed) paths.
    pub fn bands(&self, level: f64) -> UncertaintyBands {
        UncertaintyBands {
            level,
            years: self.total.years,
            window: self.total.window,
            total: self.total.band(level),
            epsilon_only: self.epsilon_only.band(level),
            beta_only: self.beta_only.band(level),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBands {
    pub level: f64,
    pub years: YearRange,
    pub window: usize,
    pub total: Vec<Band>,
    pub epsilon_only: Vec<Band>,
    pub beta_only: Vec<Band>,
}

impl UncertaintyBands {
    pub fn component(&self, mode: PathMode) -> &[Band] {
        match mode {
            PathMode::Total => &self.total,
            PathMode::EpsilonOnly => &self.epsilon_only,
            PathMode::BetaOnly => &self.beta_only,
        }
    }

    pub fn mean_width(&self, mode: PathMode) -> f64 {
        let b = self.component(mode);
        b.iter().map(Band::width).sum::<f64>() / b.len() as f64
    }
}

pub fn decompose_uncertainty(
    post: &BayesPosterior,
    pcs: Option<&ScoreMatrix>,
    years: &YearRange,
    level: f64,
    max_paths: Option<usize>,
    seed: Seed,
) -> Result<UncertaintyBands> {
    Ok(Decomposition::simulate(post, pcs, years, max_paths, seed)?.bands(level))
}

/// Long format: `draw,year,value`.
pub fn ensemble_csv(ens: &PosteriorEnsemble) -> String {
    let mut s = String::from("draw,year,value\n");
    for i in 0..ens.paths.nrows() {
        for (j, year) in ens.years.years().enumerate() {
            let _ = writeln!(s, "{i},{year},{}", ens.paths[(i, j)]);
        }
    }
    s
}

/// `year,component,lower,upper`.
pub fn bands_csv(b: &UncertaintyBands) -> String {
    let mut s = String::from("year,component,lower,upper\n");
    for (j, year) in b.years.years().enumerate() {
        for mode in [PathMode::Total, PathMode::EpsilonOnly, PathMode::BetaOnly] {
            let band = b.component(mode)[j];
            let _ = writeln!(s, "{year},{},{},{}", mode.as_str(), band.lower, band.upper);
        }
    }
    s
}
