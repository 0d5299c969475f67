//! Pseudoproxy generators: pure-noise nulls (white, AR1, AR1 fitted per
//! proxy, Brownian motion), signal-bearing proxies with random slopes, and
//! corrupted local temperatures.
//!
//! Every column draws from its own stream `seed.derive(column)`, so the
//! output is identical however the columns are scheduled.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{AnnualSeries, ProxyMatrix, SeriesKind, SeriesMeta, YearRange};
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ar1Params {
    pub phi: f64,
    pub innovation_sd: f64,
    pub mean: f64,
}

impl Ar1Params {
    pub fn new(phi: f64, innovation_sd: f64, mean: f64) -> Result<Self> {
        let p = Ar1Params {
            phi,
            innovation_sd,
            mean,
        };
        p.validate()?;
        Ok(p)
    }

    /// Unit-marginal-variance AR1 with coefficient `phi`.
    pub fn unit(phi: f64) -> Result<Self> {
        Self::new(phi, (1.0 - phi * phi).max(0.0).sqrt(), 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.phi.abs() < 1.0) {
            return Err(Error::Parameter(format!(
                "AR1 coefficient {} is not stationary",
                self.phi
            )));
        }
        if !(self.innovation_sd > 0.0) || !self.mean.is_finite() {
            return Err(Error::Parameter(format!(
                "AR1 innovation sd {} must be positive",
                self.innovation_sd
            )));
        }
        Ok(())
    }
}

/// Null pseudoproxy families.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    White,
    Ar1 { params: Ar1Params },
    /// One fitted parameter set per generated column.
    Ar1Empirical { params: Vec<Ar1Params> },
    /// Cumulated iid normals, each column standardized over `standardize_over`
    /// (the whole generated window when `None`).
    Brownian { standardize_over: Option<YearRange> },
}

impl NoiseSpec {
    pub fn ar1(phi: f64) -> Result<Self> {
        Ok(NoiseSpec::Ar1 {
            params: Ar1Params::unit(phi)?,
        })
    }

    pub fn label(&self) -> String {
        match self {
            NoiseSpec::White => "white".into(),
            NoiseSpec::Ar1 { params } => format!("ar1({})", params.phi),
            NoiseSpec::Ar1Empirical { .. } => "ar1_empirical".into(),
            NoiseSpec::Brownian { .. } => "brownian".into(),
        }
    }
}

pub(crate) fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn ar1_path(p: &Ar1Params, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let marginal_sd = p.innovation_sd / (1.0 - p.phi * p.phi).sqrt();
    let mut x = marginal_sd * normal(rng);
    let mut out = Vec::with_capacity(n);
    out.push(p.mean + x);
    for _ in 1..n {
        x = p.phi * x + p.innovation_sd * normal(rng);
        out.push(p.mean + x);
    }
    out
}

fn standardize_window(v: &mut [f64], window: std::ops::Range<usize>) {
    let m = stats::mean(&v[window.clone()]);
    let sd = stats::sample_sd(&v[window]);
    for x in v.iter_mut() {
        *x = (*x - m) / sd;
    }
}

/// Draws an `n_series`-column null matrix over `years`.
pub fn gen_noise_matrix(
    spec: &NoiseSpec,
    years: YearRange,
    n_series: usize,
    seed: Seed,
) -> Result<ProxyMatrix> {
    let n = years.len();
    if n < 2 {
        return Err(Error::Config("noise matrices need at least 2 years".into()));
    }
    if n_series == 0 {
        return Err(Error::Config("noise matrices need at least one series".into()));
    }
    match spec {
        NoiseSpec::Ar1 { params } => params.validate()?,
        NoiseSpec::Ar1Empirical { params } => {
            if params.len() != n_series {
                return Err(Error::Config(format!(
                    "AR1(Empirical) needs {n_series} parameter sets, got {}",
                    params.len()
                )));
            }
            params.iter().try_for_each(Ar1Params::validate)?;
        }
        NoiseSpec::Brownian {
            standardize_over: Some(w),
        }
            if (!years.contains_range(w) || w.len() < 2) => {
                return Err(Error::Config(format!(
                    "Brownian standardization window {w} must lie inside {years}"
                )));
            }
        _ => {}
    }

    let columns: Vec<Vec<f64>> = (0..n_series)
        .into_par_iter()
        .map(|j| {
            let mut rng = seed.derive(j as u64).rng();
            match spec {
                NoiseSpec::White => (0..n).map(|_| normal(&mut rng)).collect(),
                NoiseSpec::Ar1 { params } => ar1_path(params, n, &mut rng),
                NoiseSpec::Ar1Empirical { params } => ar1_path(&params[j], n, &mut rng),
                NoiseSpec::Brownian { standardize_over } => {
                    let mut acc = 0.0;
                    let mut v: Vec<f64> = (0..n)
                        .map(|_| {
                            acc += normal(&mut rng);
                            acc
                        })
                        .collect();
                    let w = standardize_over.unwrap_or(years);
                    let a = (w.start - years.start) as usize;
                    standardize_window(&mut v, a..a + w.len());
                    v
                }
            }
        })
        .collect();

    let label = spec.label();
    let metas = (0..n_series)
        .map(|j| {
            SeriesMeta::new(format!("{label}_{j:04}"), SeriesKind::Pseudoproxy, years.start)
                .with_note(format!("generator={label}"))
        })
        .collect();
    let mut values = vec![0.0; n * n_series];
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[i * n_series + j] = *v;
        }
    }
    ProxyMatrix::from_rows(years.start, metas, n, values, vec![false; n * n_series])
}

/// Fits AR1 parameters to the longest gap-free stretch of `series`.
///
/// `phi` is the lag-one sample autocorrelation of the demeaned stretch and
/// `innovation_sd = sd * sqrt(1 - phi^2)`.
pub fn fit_ar1(series: &AnnualSeries) -> Result<Ar1Params> {
    let run = longest_observed_run(series);
    if run.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "AR1 fit needs 10 consecutive observations, longest run is {}",
            run.len()
        )));
    }
    let m = stats::mean(&run);
    let denom: f64 = run.iter().map(|x| (x - m) * (x - m)).sum();
    if !(denom > 0.0) {
        return Err(Error::DegenerateSeries("constant series has no AR1 fit".into()));
    }
    let num: f64 = run.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    let phi = (num / denom).clamp(-0.999, 0.999);
    let sd = stats::sample_sd(&run);
    Ar1Params::new(phi, sd * (1.0 - phi * phi).sqrt(), m)
}

pub(crate) fn longest_observed_run(series: &AnnualSeries) -> Vec<f64> {
    let mut best: Vec<f64> = Vec::new();
    let mut cur: Vec<f64> = Vec::new();
    for (_, v) in series.iter() {
        match v {
            Some(x) => cur.push(x),
            None => {
                if cur.len() > best.len() {
                    best = std::mem::take(&mut cur);
                }
                cur.clear();
            }
        }
    }
    if cur.len() > best.len() {
        best = cur;
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TingleyConfig {
    /// Noise sd of each proxy.
    pub sigma_omega: f64,
    /// Spread of the per-proxy slopes.
    pub sigma_beta: f64,
    pub n_series: usize,
    pub slope_mean: f64,
}

impl TingleyConfig {
    pub fn new(sigma_omega: f64, sigma_beta: f64, n_series: usize) -> Self {
        TingleyConfig {
            sigma_omega,
            sigma_beta,
            n_series,
            slope_mean: 1.0,
        }
    }
}

/// Signal proxies `x[t,i] = beta_i * y[t] + omega[t,i]`.
///
/// Slopes are drawn once per column from Normal(slope_mean, sigma_beta^2) and
/// recorded in each column's note as `slope=<value>`.
pub fn gen_tingley(target: &AnnualSeries, cfg: &TingleyConfig, seed: Seed) -> Result<ProxyMatrix> {
    if target.has_missing() {
        return Err(Error::Coverage("Tingley target must be fully observed".into()));
    }
    if cfg.n_series == 0 || !(cfg.sigma_omega >= 0.0) || !(cfg.sigma_beta >= 0.0) {
        return Err(Error::Parameter(format!("invalid Tingley configuration {cfg:?}")));
    }
    let y = target.raw_values();
    let n = y.len();
    let p = cfg.n_series;
    let cols: Vec<(f64, Vec<f64>)> = (0..p)
        .into_par_iter()
        .map(|j| {
            let mut rng = seed.derive(j as u64).rng();
            let beta = cfg.slope_mean + cfg.sigma_beta * normal(&mut rng);
            let col = y
                .iter()
                .map(|&yt| beta * yt + cfg.sigma_omega * normal(&mut rng))
                .collect();
            (beta, col)
        })
        .collect();
    let metas = cols
        .iter()
        .enumerate()
        .map(|(j, (beta, _))| {
            SeriesMeta::new(format!("tingley_{j:04}"), SeriesKind::Pseudoproxy, target.start_year())
                .with_note(format!("slope={beta:.16e}"))
        })
        .collect();
    let mut values = vec![0.0; n * p];
    for (j, (_, col)) in cols.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            values[i * p + j] = *v;
        }
    }
    ProxyMatrix::from_rows(target.start_year(), metas, n, values, vec![false; n * p])
}

/// Slope recorded by [`gen_tingley`] or the random-slope corruption.
pub fn recorded_slope(meta: &SeriesMeta) -> Option<f64> {
    meta.note
        .as_deref()?
        .split(';')
        .find_map(|kv| kv.trim().strip_prefix("slope="))
        .and_then(|v| v.parse().ok())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseColor {
    White,
    Red,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionVariant {
    /// Add noise so that it makes up `noise_fraction` of each column's variance.
    SnrMix,
    /// Append pure-noise columns so they make up `noise_fraction` of all columns.
    ColumnAppend,
    /// Random slope times temperature plus variance-share noise.
    RandomSlope,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub noise_fraction: f64,
    pub color: NoiseColor,
    pub red_phi: f64,
    pub variant: CorruptionVariant,
    pub sigma_beta: f64,
}

impl CorruptionSpec {
    pub const DEFAULT_RED_PHI: f64 = 0.4;

    pub fn new(noise_fraction: f64, color: NoiseColor, variant: CorruptionVariant) -> Self {
        CorruptionSpec {
            noise_fraction,
            color,
            red_phi: Self::DEFAULT_RED_PHI,
            variant,
            sigma_beta: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise_fraction) {
            return Err(Error::Parameter(format!(
                "noise fraction {} outside [0, 1]",
                self.noise_fraction
            )));
        }
        if self.noise_fraction == 1.0 {
            return Err(Error::Parameter(
                "noise fraction 1 leaves no signal to scale against".into(),
            ));
        }
        if !(self.red_phi.abs() < 1.0) || !(self.sigma_beta >= 0.0) {
            return Err(Error::Parameter(format!("invalid corruption spec {self:?}")));
        }
        Ok(())
    }

    fn unit_noise(&self, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self.color {
            NoiseColor::White => (0..n).map(|_| normal(rng)).collect(),
            NoiseColor::Red => ar1_path(
                &Ar1Params {
                    phi: self.red_phi,
                    innovation_sd: (1.0 - self.red_phi * self.red_phi).sqrt(),
                    mean: 0.0,
                },
                n,
                rng,
            ),
        }
    }

    fn label(&self) -> String {
        let color = match self.color {
            NoiseColor::White => "white".to_string(),
            NoiseColor::Red => format!("red({})", self.red_phi),
        };
        format!("{:?}:{}:{color}", self.variant, self.noise_fraction)
    }
}

fn exact_unit_variance(mut v: Vec<f64>) -> Vec<f64> {
    let m = stats::mean(&v);
    let sd = stats::sample_sd(&v);
    for x in v.iter_mut() {
        *x = (*x - m) / sd;
    }
    v
}

/// Corrupts fully observed local-temperature columns according to `spec`.
///
/// Variance-share noise is rescaled to its exact sample variance, so the
/// realized share `Var(nu) / (Var(T) + Var(nu))` equals the requested fraction
/// up to the sample covariance between `T` and the noise.
pub fn corrupt_temperatures(
    local: &ProxyMatrix,
    spec: &CorruptionSpec,
    seed: Seed,
) -> Result<ProxyMatrix> {
    spec.validate()?;
    if local.missing_mask().iter().any(|&m| m) {
        return Err(Error::Coverage(
            "local temperatures must be fully observed in the experiment window".into(),
        ));
    }
    let n = local.n_years();
    let p = local.n_series();
    let f = spec.noise_fraction;
    let sources: Vec<AnnualSeries> = (0..p).map(|j| local.column(j)).collect();
    let sds: Vec<f64> = sources.iter().map(|s| stats::sample_sd(s.raw_values())).collect();
    let label = spec.label();

    match spec.variant {
        CorruptionVariant::SnrMix | CorruptionVariant::RandomSlope => {
            let scale = (f / (1.0 - f)).sqrt();
            let slope_draw = spec.variant == CorruptionVariant::RandomSlope;
            let cols: Vec<(Option<f64>, Vec<f64>)> = (0..p)
                .into_par_iter()
                .map(|j| {
                    let mut rng = seed.derive(j as u64).rng();
                    let beta = slope_draw.then(|| 1.0 + spec.sigma_beta * normal(&mut rng));
                    let noise = exact_unit_variance(spec.unit_noise(n, &mut rng));
                    let t = sources[j].raw_values();
                    let b = beta.unwrap_or(1.0);
                    let col = if f == 0.0 && b == 1.0 {
                        t.to_vec()
                    } else {
                        t.iter()
                            .zip(&noise)
                            .map(|(&tv, &u)| b * tv + scale * sds[j] * u)
                            .collect()
                    };
                    (beta, col)
                })
                .collect();
            let metas = local
                .columns()
                .iter()
                .zip(&cols)
                .map(|(m, (beta, _))| {
                    let mut meta = m.clone();
                    meta.kind = SeriesKind::Pseudoproxy;
                    let mut note = format!("corrupted={label}");
                    if let Some(b) = beta {
                        note.push_str(&format!(";slope={b:.16e}"));
                    }
                    meta.note = Some(note);
                    meta
                })
                .collect();
            let mut values = vec![0.0; n * p];
            for (j, (_, col)) in cols.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    values[i * p + j] = *v;
                }
            }
            ProxyMatrix::from_rows(local.start_year(), metas, n, values, vec![false; n * p])
        }
        CorruptionVariant::ColumnAppend => {
            let extra = ((p as f64) * f / (1.0 - f)).round() as usize;
            if extra == 0 {
                return Ok(local.clone());
            }
            let cols: Vec<Vec<f64>> = (0..extra)
                .into_par_iter()
                .map(|k| {
                    let mut rng = seed.derive_path(&[1, k as u64]).rng();
                    let sd = sds[k % p];
                    spec.unit_noise(n, &mut rng).into_iter().map(|u| sd * u).collect()
                })
                .collect();
            let metas = (0..extra)
                .map(|k| {
                    SeriesMeta::new(format!("noise_{k:04}"), SeriesKind::Pseudoproxy, local.start_year())
                        .with_note(format!("appended={label}"))
                })
                .collect();
            let mut values = vec![0.0; n * extra];
            for (k, col) in cols.iter().enumerate() {
                for (i, v) in col.iter().enumerate() {
                    values[i * extra + k] = *v;
                }
            }
            let noise = ProxyMatrix::from_rows(
                local.start_year(),
                metas,
                n,
                values,
                vec![false; n * extra],
            )?;
            local.hstack(&noise)
        }
    }
}

/// A zero-mean AR(p) series with unit innovation sd times `innovation_sd`,
/// started after a 500-step burn-in. Used as a synthetic temperature target.
pub fn gen_ar_target(phi: &[f64], innovation_sd: f64, years: YearRange, seed: Seed) -> Result<AnnualSeries> {
    if !crate::solvers::is_stationary(phi) {
        return Err(Error::Parameter(format!("AR coefficients {phi:?} are not stationary")));
    }
    if !(innovation_sd > 0.0) {
        return Err(Error::Parameter("innovation sd must be positive".into()));
    }
    let burn = 500;
    let n = years.len() + burn;
    let mut rng = seed.rng();
    let mut y = vec![0.0; n];
    for t in 0..n {
        let mut v = innovation_sd * normal(&mut rng);
        for (i, f) in phi.iter().enumerate() {
            if t > i {
                v += f * y[t - 1 - i];
            }
        }
        y[t] = v;
    }
    AnnualSeries::new(years.start, y.split_off(burn))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn yr(a: i32, b: i32) -> YearRange {
        YearRange::new(a, b).unwrap()
    }

    fn lag1(v: &[f64]) -> f64 {
        let m = stats::mean(v);
        let num: f64 = v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        let den: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
        num / den
    }

    #[test]
    fn ar1_with_zero_phi_is_white() {
        let m = gen_noise_matrix(&NoiseSpec::ar1(0.0).unwrap(), yr(1, 10_000), 1, Seed::new(5)).unwrap();
        let r = lag1(m.column(0).raw_values());
        assert!(r.abs() < 0.03, "lag1 = {r}");
    }

    #[test]
    fn named_weak_nulls_are_valid() {
        for phi in [0.25, 0.4] {
            let m = gen_noise_matrix(&NoiseSpec::ar1(phi).unwrap(), yr(1, 5000), 2, Seed::new(1)).unwrap();
            assert!((lag1(m.column(0).raw_values()) - phi).abs() < 0.05);
        }
    }

    #[test]
    fn nonstationary_phi_rejected() {
        assert!(matches!(NoiseSpec::ar1(1.0), Err(Error::Parameter(_))));
        let spec = NoiseSpec::Ar1 {
            params: Ar1Params {
                phi: -1.2,
                innovation_sd: 1.0,
                mean: 0.0,
            },
        };
        assert!(gen_noise_matrix(&spec, yr(0, 9), 1, Seed::new(0)).is_err());
    }

    #[test]
    fn empirical_needs_one_param_set_per_column() {
        let spec = NoiseSpec::Ar1Empirical {
            params: vec![Ar1Params::unit(0.5).unwrap()],
        };
        assert!(gen_noise_matrix(&spec, yr(0, 9), 2, Seed::new(0)).is_err());
        assert!(gen_noise_matrix(&spec, yr(0, 9), 1, Seed::new(0)).is_ok());
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = NoiseSpec::Brownian {
            standardize_over: None,
        };
        let a = gen_noise_matrix(&spec, yr(0, 99), 7, Seed::new(9)).unwrap();
        let b = gen_noise_matrix(&spec, yr(0, 99), 7, Seed::new(9)).unwrap();
        assert_eq!(a, b);
        let c = gen_noise_matrix(&spec, yr(0, 99), 7, Seed::new(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn brownian_standardized_over_window() {
        let w = yr(50, 99);
        let spec = NoiseSpec::Brownian {
            standardize_over: Some(w),
        };
        let m = gen_noise_matrix(&spec, yr(0, 99), 3, Seed::new(2)).unwrap();
        for j in 0..3 {
            let v = m.column(j).observed_in(&w);
            assert!(stats::mean(&v).abs() < 1e-12);
            assert!((stats::sample_sd(&v) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_ar1_recovers_high_phi() {
        // Monte Carlo: 50 replicates of n = 10 000
        let spec = NoiseSpec::Ar1 {
            params: Ar1Params::new(0.9, 1.0, 0.0).unwrap(),
        };
        let m = gen_noise_matrix(&spec, yr(1, 10_000), 50, Seed::new(77)).unwrap();
        for j in 0..50 {
            let p = fit_ar1(&m.column(j)).unwrap();
            assert!((p.phi - 0.9).abs() < 0.02, "replicate {j}: {}", p.phi);
        }
    }

    #[test]
    fn fit_ar1_on_white_noise_and_degenerate_inputs() {
        let m = gen_noise_matrix(&NoiseSpec::White, yr(1, 10_000), 1, Seed::new(4)).unwrap();
        assert!(fit_ar1(&m.column(0)).unwrap().phi.abs() < 0.03);
        let c = AnnualSeries::new(0, vec![2.0; 20]).unwrap();
        assert!(matches!(fit_ar1(&c), Err(Error::DegenerateSeries(_))));
        let short = AnnualSeries::new(0, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(fit_ar1(&short), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn fit_ar1_uses_longest_gap_free_run() {
        let mut vals: Vec<Option<f64>> = (0..30).map(|i| Some((i as f64 * 0.7).sin())).collect();
        vals[5] = None;
        let s = AnnualSeries::from_options(0, vals).unwrap();
        assert_eq!(longest_observed_run(&s).len(), 24);
        assert!(fit_ar1(&s).is_ok());
    }

    #[test]
    fn tingley_without_noise_copies_target() {
        let y = AnnualSeries::new(1850, (0..40).map(|i| (i as f64).cos()).collect()).unwrap();
        let m = gen_tingley(&y, &TingleyConfig::new(0.0, 0.0, 4), Seed::new(1)).unwrap();
        for j in 0..4 {
            assert_eq!(m.column(j), y);
            assert_eq!(recorded_slope(&m.columns()[j]), Some(1.0));
        }
    }

    #[test]
    fn tingley_slopes_follow_sigma_beta() {
        let y = AnnualSeries::new(0, vec![1.0; 5]).unwrap();
        let m = gen_tingley(&y, &TingleyConfig::new(0.0, 3.0, 2000), Seed::new(8)).unwrap();
        let slopes: Vec<f64> = m.columns().iter().map(|c| recorded_slope(c).unwrap()).collect();
        assert!((stats::mean(&slopes) - 1.0).abs() < 0.25);
        assert!((stats::sample_sd(&slopes) - 3.0).abs() < 0.2);
        for j in [0, 17, 1999] {
            assert_eq!(m.get(2, j), Some(slopes[j]));
        }
    }

    #[test]
    fn composite_correlation_grows_with_series_count() {
        let tgt = gen_noise_matrix(&NoiseSpec::ar1(0.5).unwrap(), yr(1850, 1998), 1, Seed::new(21)).unwrap();
        let y = tgt.column(0);
        let corr_for = |p: usize| {
            let m = gen_tingley(&y, &TingleyConfig::new(4.0, 0.0, p), Seed::new(22)).unwrap();
            let comp: Vec<f64> = (0..m.n_years())
                .map(|i| (0..p).map(|j| m.raw_values()[i * p + j]).sum::<f64>() / p as f64)
                .collect();
            stats::correlation(&comp, y.raw_values()).unwrap()
        };
        let (c10, c100, c1138) = (corr_for(10), corr_for(100), corr_for(1138));
        assert!(c10 > 0.0 && c10 < c100 && c100 < c1138, "{c10} {c100} {c1138}");
    }

    fn local_temps(p: usize, n: usize, seed: u64) -> ProxyMatrix {
        let m = gen_noise_matrix(&NoiseSpec::ar1(0.6).unwrap(), yr(1, n as i32), p, Seed::new(seed)).unwrap();
        let metas = (0..p)
            .map(|j| SeriesMeta::new(format!("t{j}"), SeriesKind::LocalTemperature, 1))
            .collect();
        ProxyMatrix::from_rows(1, metas, n, m.raw_values().to_vec(), vec![false; n * p]).unwrap()
    }

    #[test]
    fn zero_fraction_leaves_input_unchanged() {
        let local = local_temps(5, 50, 3);
        for variant in [CorruptionVariant::SnrMix, CorruptionVariant::ColumnAppend, CorruptionVariant::RandomSlope] {
            let spec = CorruptionSpec::new(0.0, NoiseColor::Red, variant);
            let out = corrupt_temperatures(&local, &spec, Seed::new(1)).unwrap();
            assert_eq!(out.raw_values(), local.raw_values(), "{variant:?}");
        }
    }

    #[test]
    fn column_append_doubles_at_half() {
        let local = local_temps(283, 20, 4);
        let spec = CorruptionSpec::new(0.5, NoiseColor::White, CorruptionVariant::ColumnAppend);
        let out = corrupt_temperatures(&local, &spec, Seed::new(2)).unwrap();
        assert_eq!(out.n_series(), 566);
        assert_eq!(out.select_columns(&(0..283).collect::<Vec<_>>()).raw_values(), local.raw_values());
    }

    #[test]
    fn snr_mix_full_noise_is_an_error() {
        let local = local_temps(2, 20, 4);
        let spec = CorruptionSpec::new(1.0, NoiseColor::White, CorruptionVariant::SnrMix);
        assert!(matches!(
            corrupt_temperatures(&local, &spec, Seed::new(2)),
            Err(Error::Parameter(_))
        ));
    }

    #[test]
    fn snr_mix_correlation_and_noise_share() {
        // analytic: corr(T + nu, T) = sqrt(1 - f)
        // per-column sampling sd of the correlation is ~0.029 at n = 1000, so a
        // single column lands inside +-0.05 with probability ~0.92; check the
        // share of columns inside the band and the mean tightly
        let local = local_temps(40, 1000, 6);
        for (f, color) in [(0.94, NoiseColor::White), (0.86, NoiseColor::Red)] {
            let spec = CorruptionSpec::new(f, color, CorruptionVariant::SnrMix);
            let out = corrupt_temperatures(&local, &spec, Seed::new(7)).unwrap();
            let mut corrs = Vec::new();
            for j in 0..40 {
                let t = local.column(j);
                let x = out.column(j);
                corrs.push(stats::correlation(t.raw_values(), x.raw_values()).unwrap());
                let nu: Vec<f64> = x.raw_values().iter().zip(t.raw_values()).map(|(a, b)| a - b).collect();
                let vn = stats::sample_variance(&nu);
                let vt = stats::sample_variance(t.raw_values());
                let share = vn / (vt + vn);
                assert!((share - f).abs() < 0.02, "col {j}: share {share}");
            }
            let target = (1.0 - f).sqrt();
            let inside = corrs.iter().filter(|c| (*c - target).abs() < 0.05).count();
            assert!(inside >= 32, "{inside}/40 columns inside band for f = {f}");
            assert!((stats::mean(&corrs) - target).abs() < 0.015);
        }
    }

    #[test]
    fn random_slope_records_slopes() {
        let local = local_temps(3, 30, 9);
        let mut spec = CorruptionSpec::new(0.5, NoiseColor::White, CorruptionVariant::RandomSlope);
        spec.sigma_beta = 3.0;
        let out = corrupt_temperatures(&local, &spec, Seed::new(3)).unwrap();
        assert!(out.columns().iter().all(|c| recorded_slope(c).is_some()));
        let mut spec0 = spec;
        spec0.noise_fraction = 0.0;
        let out0 = corrupt_temperatures(&local, &spec0, Seed::new(3)).unwrap();
        let b = recorded_slope(&out0.columns()[1]).unwrap();
        assert!((out0.get(5, 1).unwrap() - b * local.get(5, 1).unwrap()).abs() < 1e-12);
    }
}
