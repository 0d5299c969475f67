//! Real-versus-simulated fidelity checks: per-series summary statistics,
//! ACF/PACF, stationary-bootstrap nulls and QQ comparisons.

use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AnnualSeries, YearRange};
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::stats;

const MIN_POINTS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatName {
    Lag1Autocorr,
    CorrWithTarget,
    SdFirstDiffStandardized,
}

impl StatName {
    pub const ALL: [StatName; 3] = [
        StatName::Lag1Autocorr,
        StatName::CorrWithTarget,
        StatName::SdFirstDiffStandardized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StatName::Lag1Autocorr => "lag1_autocorr",
            StatName::CorrWithTarget => "corr_with_target",
            StatName::SdFirstDiffStandardized => "sd_first_diff_standardized",
        }
    }
}

impl FromStr for StatName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StatName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown statistic '{s}'")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesStat {
    pub name: StatName,
    pub value: f64,
    pub series_id: String,
    pub window: YearRange,
}

/// Statistic of a gappy sequence (`None` = missing), with `target` aligned
/// index by index when needed.
fn stat_values(x: &[Option<f64>], name: StatName, target: Option<&[Option<f64>]>) -> Result<f64> {
    let observed: Vec<f64> = x.iter().flatten().copied().collect();
    if observed.len() < MIN_POINTS {
        return Err(Error::InsufficientData(format!(
            "{} observed points, need {MIN_POINTS}",
            observed.len()
        )));
    }
    match name {
        StatName::Lag1Autocorr => {
            let (a, b): (Vec<f64>, Vec<f64>) = x
                .windows(2)
                .filter_map(|w| Some((w[0]?, w[1]?)))
                .unzip();
            if a.len() < 2 {
                return Err(Error::InsufficientData("no consecutive observed pairs".into()));
            }
            stats::correlation(&a, &b).ok_or_else(|| Error::DegenerateSeries("zero-variance lag pairs".into()))
        }
        StatName::SdFirstDiffStandardized => {
            let m = stats::mean(&observed);
            let sd = stats::sample_sd(&observed);
            if !(sd > 0.0) {
                return Err(Error::DegenerateSeries("constant series".into()));
            }
            let d: Vec<f64> = x
                .windows(2)
                .filter_map(|w| Some(((w[1]? - m) - (w[0]? - m)) / sd))
                .collect();
            if d.len() < 2 {
                return Err(Error::InsufficientData("no consecutive observed pairs".into()));
            }
            Ok(stats::sample_sd(&d))
        }
        StatName::CorrWithTarget => {
            let t = target.ok_or_else(|| Error::Config("corr_with_target needs a target series".into()))?;
            let (a, b): (Vec<f64>, Vec<f64>) = x
                .iter()
                .zip(t)
                .filter_map(|(u, v)| Some(((*u)?, (*v)?)))
                .unzip();
            if a.len() < MIN_POINTS {
                return Err(Error::InsufficientData(format!("{} overlapping points", a.len())));
            }
            stats::correlation(&a, &b).ok_or_else(|| Error::DegenerateSeries("zero-variance series".into()))
        }
    }
}

fn window_values(s: &AnnualSeries, window: &YearRange) -> Vec<Option<f64>> {
    window.years().map(|t| s.get(t)).collect()
}

pub fn series_stat(
    series: &AnnualSeries,
    series_id: &str,
    name: StatName,
    target: Option<&AnnualSeries>,
    window: &YearRange,
) -> Result<SeriesStat> {
    let x = window_values(series, window);
    let t = target.map(|t| window_values(t, window));
    Ok(SeriesStat {
        name,
        value: stat_values(&x, name, t.as_deref())?,
        series_id: series_id.to_string(),
        window: *window,
    })
}

/// Sample ACF (lags 1..=max_lag) and PACF via Durbin–Levinson.
pub fn acf_pacf(x: &[f64], max_lag: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if x.len() <= max_lag + 10 {
        return Err(Error::InsufficientData(format!(
            "{} points for {max_lag} lags",
            x.len()
        )));
    }
    let n = x.len();
    let m = stats::mean(x);
    let gamma: Vec<f64> = (0..=max_lag)
        .map(|k| (0..n - k).map(|t| (x[t] - m) * (x[t + k] - m)).sum::<f64>() / n as f64)
        .collect();
    if !(gamma[0] > 0.0) {
        return Err(Error::DegenerateSeries("constant series".into()));
    }
    let rho: Vec<f64> = gamma.iter().map(|g| g / gamma[0]).collect();
    let mut pacf = Vec::with_capacity(max_lag);
    let mut phi: Vec<f64> = Vec::new();
    let mut v = 1.0;
    for k in 1..=max_lag {
        let num = rho[k] - (1..k).map(|j| phi[j - 1] * rho[k - j]).sum::<f64>();
        let a = if v > 0.0 { num / v } else { 0.0 };
        let mut next: Vec<f64> = (1..k).map(|j| phi[j - 1] - a * phi[k - j - 1]).collect();
        next.push(a);
        phi = next;
        v *= 1.0 - a * a;
        pacf.push(a);
    }
    Ok((rho[1..].to_vec(), pacf))
}

/// One stationary-bootstrap resample: geometric block lengths with mean
/// `mean_block`, wrapping circularly. `mean_block >= n` returns `x` itself.
pub fn stationary_resample<R: Rng>(x: &[f64], mean_block: usize, rng: &mut R) -> Vec<f64> {
    let n = x.len();
    if mean_block >= n {
        return x.to_vec();
    }
    let p = 1.0 / mean_block as f64;
    let mut out = Vec::with_capacity(n);
    let mut i = rng.random_range(0..n);
    for _ in 0..n {
        out.push(x[i]);
        i = if rng.random::<f64>() < p { rng.random_range(0..n) } else { (i + 1) % n };
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    /// Mean block length in years.
    pub block_length: usize,
    pub n_boot: usize,
    pub seed: Seed,
}

impl BootstrapConfig {
    pub fn new(seed: Seed) -> Self {
        BootstrapConfig {
            block_length: 10,
            n_boot: 1000,
            seed,
        }
    }
}

/// Bootstrap distribution of a statistic, kept per series so it can be
/// pooled or compared series by series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapNull {
    pub stat: StatName,
    pub scheme: String,
    pub block_length: usize,
    pub n_boot: usize,
    /// `samples[series][replicate]`.
    pub samples: Vec<Vec<f64>>,
}

impl BootstrapNull {
    pub fn pooled(&self) -> Vec<f64> {
        self.samples.iter().flatten().copied().collect()
    }

    /// Statistic of every series in replicate `b`.
    pub fn replicate(&self, b: usize) -> Vec<f64> {
        self.samples.iter().map(|s| s[b]).collect()
    }
}

/// Resamples the longest gap-free run of each series inside `window` and
/// recomputes the statistic; for `corr_with_target` only the series is
/// resampled, against the target over the same years. Series `i`, replicate
/// `b` uses `seed.derive_path([i, b])`.
pub fn bootstrap_null(
    series: &[AnnualSeries],
    name: StatName,
    target: Option<&AnnualSeries>,
    window: &YearRange,
    cfg: &BootstrapConfig,
) -> Result<BootstrapNull> {
    if cfg.block_length < 1 {
        return Err(Error::Config("bootstrap block length must be at least 1".into()));
    }
    if cfg.n_boot < 100 {
        return Err(Error::Config(format!("n_boot = {} (minimum 100)", cfg.n_boot)));
    }
    let samples = series
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let (years, run) = longest_run(s, window);
            if run.len() < MIN_POINTS {
                return Err(Error::InsufficientData(format!("series {i}: {} gap-free points", run.len())));
            }
            let t: Option<Vec<Option<f64>>> = target.map(|t| years.years().map(|y| t.get(y)).collect());
            (0..cfg.n_boot as u64)
                .into_par_iter()
                .map(|b| {
                    let mut rng = cfg.seed.derive_path(&[i as u64, b]).rng();
                    let r: Vec<Option<f64>> = stationary_resample(&run, cfg.block_length, &mut rng)
                        .into_iter()
                        .map(Some)
                        .collect();
                    stat_values(&r, name, t.as_deref())
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BootstrapNull {
        stat: name,
        scheme: "stationary".into(),
        block_length: cfg.block_length,
        n_boot: cfg.n_boot,
        samples,
    })
}

fn longest_run(s: &AnnualSeries, window: &YearRange) -> (YearRange, Vec<f64>) {
    let mut best = (window.start, Vec::new());
    let mut cur = (window.start, Vec::new());
    for t in window.years() {
        match s.get(t) {
            Some(v) => {
                if cur.1.is_empty() {
                    cur.0 = t;
                }
                cur.1.push(v);
            }
            None => {
                if cur.1.len() > best.1.len() {
                    best = std::mem::take(&mut cur);
                }
                cur.1.clear();
            }
        }
    }
    if cur.1.len() > best.1.len() {
        best = cur;
    }
    let end = best.0 + best.1.len().max(1) as i32 - 1;
    (YearRange { start: best.0, end }, best.1)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / x.len() as f64 - j as f64 / y.len() as f64).abs());
    }
    d
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QqReport {
    pub probabilities: Vec<f64>,
    pub ref_quantiles: Vec<f64>,
    pub test_quantiles: Vec<f64>,
    /// 2.5%/97.5% envelope of the null samples' quantiles.
    pub band: Option<Vec<(f64, f64)>>,
    pub ks: f64,
    /// 95th percentile of the KS distance between the reference and each
    /// null sample.
    pub ks_threshold: Option<f64>,
}

impl QqReport {
    pub fn exceeds_band(&self) -> Option<bool> {
        self.ks_threshold.map(|t| self.ks > t)
    }

    /// `prob,ref_quantile,test_quantile,band_lo,band_hi`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("prob,ref_quantile,test_quantile,band_lo,band_hi\n");
        for (i, p) in self.probabilities.iter().enumerate() {
            let (lo, hi) = match &self.band {
                Some(b) => (b[i].0.to_string(), b[i].1.to_string()),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(s, "{p},{},{},{lo},{hi}", self.ref_quantiles[i], self.test_quantiles[i]);
        }
        s
    }
}

fn qq_grid() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

fn quantiles(xs: &[f64], probs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    probs.iter().map(|&p| stats::quantile_sorted(&v, p)).collect()
}

/// Quantile pairs on the 1%..99% grid. `null_samples` are draws of the
/// reference population (for instance bootstrap replicates); they set the
/// per-quantile band and the KS threshold.
pub fn qq_compare(reference: &[f64], test: &[f64], null_samples: &[Vec<f64>]) -> Result<QqReport> {
    if reference.is_empty() || test.is_empty() {
        return Err(Error::InsufficientData("QQ comparison needs two nonempty samples".into()));
    }
    let probs = qq_grid();
    let (band, ks_threshold) = if null_samples.is_empty() {
        (None, None)
    } else {
        let qs: Vec<Vec<f64>> = null_samples.iter().map(|s| quantiles(s, &probs)).collect();
        let band = (0..probs.len())
            .map(|i| {
                let col: Vec<f64> = qs.iter().map(|q| q[i]).collect();
                (stats::quantile(&col, 0.025), stats::quantile(&col, 0.975))
            })
            .collect();
        let ks: Vec<f64> = null_samples.iter().map(|s| ks_distance(reference, s)).collect();
        (Some(band), Some(stats::quantile(&ks, 0.95)))
    };
    Ok(QqReport {
        ref_quantiles: quantiles(reference, &probs),
        test_quantiles: quantiles(test, &probs),
        probabilities: probs,
        band,
        ks: ks_distance(reference, test),
        ks_threshold,
    })
}
