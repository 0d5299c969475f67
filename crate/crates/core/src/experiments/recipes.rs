use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::params::{parse_method, parse_null};
use super::synth::{signal_columns, synthetic_target};
use super::{Ctx, Recipe};
use crate::bayes::{bands_csv, ensemble_csv, fit_bayes, BayesSpec, Decomposition, PathMode};
use crate::data::{
    load_matrix, load_series, make_holdout_blocks, AnnualSeries, CenteringSpec, HoldoutScheme, MatrixSchema,
    ProxyMatrix, SeriesKind, YearRange,
};
use crate::diagnostics::{bootstrap_null, qq_compare, series_stat, BootstrapConfig, StatName};
use crate::error::{Error, Result};
use crate::pcselect::{select_k, selection_table, table_csv, Criterion, Spectrum};
use crate::pseudoproxy::{corrupt_temperatures, gen_tingley, CorruptionSpec, CorruptionVariant, NoiseColor, TingleyConfig};
use crate::rng::Seed;
use crate::solvers::{pca_decompose, predict, PredictInput};
use crate::stats;
use crate::validation::{
    fit_method, null_distribution, rmse_profile, significance, MethodConfig, NullBand, NullSpec, Pipeline,
    RmseReport, SignificanceMode,
};

const CALIBRATION: (i32, i32) = (1850, 1998);

pub(super) fn inputs(r: Recipe) -> &'static [&'static str] {
    match r {
        Recipe::Tingley | Recipe::TingleyPerturbed => &["target"],
        Recipe::SmerdonSnr | Recipe::SmerdonAppend | Recipe::SmerdonSlope => &["target", "local_temps", "sidecar"],
        Recipe::PcCriteria => &["proxies", "sidecar"],
        _ => &["target", "proxies", "sidecar"],
    }
}

pub(super) fn param_keys(r: Recipe) -> &'static [&'static str] {
    macro_rules! keys {
        ($($k:expr),*) => {
            &[$($k),*]
        };
    }
    match r {
        Recipe::CpsNulls => keys!(
            "calibration", "block_length", "stride", "replications", "methods", "nulls", "probabilities",
            "cv_folds", "cv_repetitions", "keep_replications", "target_phi", "n_series", "signal", "noise_phi"
        ),
        Recipe::Tingley => keys!(
            "calibration", "sigma_omegas", "sigma_beta", "n_series", "replicates", "block_length", "stride",
            "cv_folds", "cv_repetitions", "target_phi"
        ),
        Recipe::TingleyPerturbed => keys!(
            "calibration", "sigma_betas", "sigma_omega", "n_series", "replicates", "block_length", "stride",
            "cv_folds", "cv_repetitions", "target_phi"
        ),
        Recipe::SmerdonSnr | Recipe::SmerdonAppend | Recipe::SmerdonSlope => keys!(
            "calibration", "settings", "sigma_beta", "red_phi", "n_local", "local_corr", "local_phi", "methods",
            "block_length", "stride", "cv_folds", "cv_repetitions", "target_phi"
        ),
        Recipe::CenteringBug => keys!(
            "calibration", "reference", "replicates", "trend", "proxy_trend", "methods", "block_length", "stride", "cv_folds",
            "cv_repetitions", "target_phi", "n_series", "signal", "noise_phi"
        ),
        Recipe::BayesBackcast => keys!(
            "calibration", "years", "k", "models", "iterations", "burn_in", "chains", "thin", "max_paths", "level",
            "window", "write_paths", "target_phi", "n_series", "signal", "noise_phi"
        ),
        Recipe::PcCriteria => keys!(
            "calibration", "eigenvalues", "thresholds", "random_spectra", "random_dim", "target_phi", "n_series",
            "signal", "noise_phi"
        ),
        Recipe::SimFidelity => keys!(
            "calibration", "sims", "stats", "n_boot", "block_length", "target_phi", "n_series", "signal", "noise_phi"
        ),
    }
}

pub(super) fn run(r: Recipe, ctx: &mut Ctx) -> Result<()> {
    match r {
        Recipe::CpsNulls => cps_nulls(ctx),
        Recipe::Tingley => tingley(ctx),
        Recipe::TingleyPerturbed => tingley_perturbed(ctx),
        Recipe::SmerdonSnr => smerdon(ctx, CorruptionVariant::SnrMix),
        Recipe::SmerdonAppend => smerdon(ctx, CorruptionVariant::ColumnAppend),
        Recipe::SmerdonSlope => smerdon(ctx, CorruptionVariant::RandomSlope),
        Recipe::CenteringBug => centering_bug(ctx),
        Recipe::BayesBackcast => bayes_backcast(ctx),
        Recipe::PcCriteria => pc_criteria(ctx),
        Recipe::SimFidelity => sim_fidelity(ctx),
    }
}

// seed streams, first element of every derive_path
const S_TARGET: u64 = 1;
const S_PROXIES: u64 = 2;
const S_SCORE: u64 = 3;
const S_HOLDOUT: u64 = 4;
const S_MCMC: u64 = 5;
const S_PATHS: u64 = 6;
const S_SPECTRA: u64 = 7;
const S_SIM: u64 = 8;
const S_BOOT: u64 = 9;
const S_CORRUPT: u64 = 10;
const S_NULL: u64 = 11;

fn pair(v: &[f64], key: &str) -> Result<(f64, f64)> {
    match v {
        [a] => Ok((*a, *a)),
        [a, b] => Ok((*a, *b)),
        _ => Err(Error::Config(format!("parameter '{key}' must be [lo, hi]"))),
    }
}

fn slug(s: &str) -> String {
    let mut out: String = s
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    while out.ends_with('_') {
        out.pop();
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn cv_shape(ctx: &mut Ctx, reps_default: usize) -> Result<(usize, usize)> {
    Ok((ctx.params.get("cv_folds", 5usize)?, ctx.params.get("cv_repetitions", reps_default)?))
}

fn methods(ctx: &mut Ctx, default: &[&str], cv: (usize, usize)) -> Result<Vec<(String, MethodConfig)>> {
    let names: Vec<String> = ctx.params.get("methods", default.iter().map(|s| s.to_string()).collect())?;
    names
        .into_iter()
        .map(|n| parse_method(&n, cv.0, cv.1).map(|m| (n, m)))
        .collect()
}

fn scheme(ctx: &mut Ctx, cal: YearRange, stride_default: usize) -> Result<HoldoutScheme> {
    let len = ctx.params.get("block_length", 30usize)?;
    let stride = ctx.params.get("stride", stride_default)?;
    make_holdout_blocks(cal, len, stride, None)
}

struct Synth {
    phi: Vec<f64>,
    n: usize,
    signal: f64,
    noise_phi: (f64, f64),
}

/// Defaults for the synthetic stand-ins; every field can be overridden.
struct SynthDefaults {
    target_phi: &'static [f64],
    signal: f64,
    noise_phi: (f64, f64),
}

const STANDARD: SynthDefaults = SynthDefaults {
    target_phi: &[0.5, 0.2],
    signal: 0.3,
    noise_phi: (0.3, 0.9),
};

/// Persistent target and weak, strongly reddened proxies: the setting in
/// which the choice of null family matters.
const PERSISTENT: SynthDefaults = SynthDefaults {
    target_phi: &[0.95],
    signal: 0.05,
    noise_phi: (0.9, 0.98),
};

fn synth_params(ctx: &mut Ctx, d: &SynthDefaults) -> Result<Synth> {
    let phi = ctx.params.get("target_phi", d.target_phi.to_vec())?;
    let n = ctx.params.get("n_series", 93usize)?;
    let signal = ctx.params.get("signal", d.signal)?;
    let noise_phi: Vec<f64> = ctx.params.get("noise_phi", vec![d.noise_phi.0, d.noise_phi.1])?;
    Ok(Synth {
        phi,
        n,
        signal,
        noise_phi: pair(&noise_phi, "noise_phi")?,
    })
}

fn load_matrix_input(ctx: &Ctx, name: &str, kind: SeriesKind) -> Result<Option<ProxyMatrix>> {
    let Some(path) = ctx.input(name) else {
        return Ok(None);
    };
    let schema = MatrixSchema {
        sidecar: ctx.input("sidecar").map(|p| p.to_path_buf()),
        default_kind: kind,
    };
    load_matrix(path, &schema).map(Some)
}

fn load_target(ctx: &Ctx) -> Result<Option<AnnualSeries>> {
    ctx.input("target").map(load_series).transpose()
}

fn require<T>(v: Option<T>, what: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("real-data mode needs the '{what}' input")))
}

/// Target and proxy matrix over `span`: the inputs when supplied, otherwise
/// the synthetic stand-ins.
fn target_and_proxies(ctx: &mut Ctx, cal: &YearRange, span: YearRange, d: &SynthDefaults) -> Result<(AnnualSeries, ProxyMatrix)> {
    if ctx.is_real() {
        let t = require(load_target(ctx)?, "target")?;
        let p = require(load_matrix_input(ctx, "proxies", SeriesKind::Proxy)?, "proxies")?;
        return Ok((t, p));
    }
    let s = synth_params(ctx, d)?;
    let t = synthetic_target(&s.phi, span, cal, ctx.seed.derive(S_TARGET))?;
    let p = signal_columns(
        &t,
        s.n,
        (s.signal, s.signal),
        s.noise_phi,
        SeriesKind::Pseudoproxy,
        "pp_",
        ctx.seed.derive(S_PROXIES),
    )?;
    Ok((t, p))
}

fn failed_blocks(reports: &[&RmseReport]) -> Result<()> {
    let bad: usize = reports.iter().map(|r| r.n_failed()).sum();
    let total: usize = reports.iter().map(|r| r.per_block.len()).sum();
    if bad > 0 {
        let first = reports
            .iter()
            .flat_map(|r| r.per_block.iter())
            .find_map(|b| b.error.clone())
            .unwrap_or_default();
        return Err(Error::Numeric(format!("{bad} of {total} holdout blocks failed; first: {first}")));
    }
    Ok(())
}

// ---------------------------------------------------------------- cps_nulls

#[derive(Serialize)]
struct NullReport<'a> {
    method: &'a str,
    null: &'a str,
    n_replications: usize,
    band: &'a NullBand,
    per_block: &'a [crate::validation::Exceedance],
    aggregate: &'a crate::validation::Exceedance,
    replication_means: Vec<f64>,
    failed_blocks: usize,
    replications: Option<&'a [RmseReport]>,
}

fn cps_nulls(ctx: &mut Ctx) -> Result<()> {
    let cal = ctx.params.range("calibration", CALIBRATION)?;
    let scheme = scheme(ctx, cal, 1)?;
    let reps = ctx.params.get("replications", 100usize)?;
    let cv = cv_shape(ctx, 10)?;
    let methods = methods(ctx, &["cps", "lasso_tingley"], cv)?;
    let null_names: Vec<String> = ctx.params.get(
        "nulls",
        ["white", "ar1(0.25)", "ar1(0.4)", "ar1_empirical", "brownian"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )?;
    let probs: Vec<f64> = ctx.params.get("probabilities", vec![0.025, 0.5, 0.975])?;
    let keep = ctx.params.get("keep_replications", false)?;
    let (target, proxies) = target_and_proxies(ctx, &cal, cal, &PERSISTENT)?;
    let nulls: Vec<(String, NullSpec)> = null_names
        .iter()
        .map(|n| Ok((n.clone(), NullSpec::like(parse_null(n, &proxies, &cal)?, &proxies))))
        .collect::<Result<_>>()?;

    let mut blocks = String::from("method,null,block_start,block_end,block_mode,real_rmse");
    for p in &probs {
        let _ = write!(blocks, ",q{p}");
    }
    blocks.push_str(",count,n,p_raw,p_corrected\n");
    let mut agg = String::from("method,null,real_mean,null_median,count,n,p_raw,p_corrected\n");

    for (mi, (mname, method)) in methods.iter().enumerate() {
        let pipe = Pipeline::new(method.clone());
        let seed = ctx.seed.derive_path(&[S_SCORE, mi as u64]);
        let real = ctx.stage(&format!("real:{mname}"), |ctx| {
            let r = rmse_profile(&pipe, &proxies, &target, &scheme, "proxy", seed);
            ctx.report(&format!("real_{}", slug(mname)), &r)?;
            failed_blocks(&[&r])?;
            Ok(r)
        });
        let Some(real) = real else { continue };
        for (ni, (nname, spec)) in nulls.iter().enumerate() {
            ctx.stage(&format!("null:{mname}:{nname}"), |ctx| {
                // the same null draws for every method
                let dist = null_distribution(&pipe, spec, &target, &scheme, reps, ctx.seed.derive_path(&[S_NULL, ni as u64]))?;
                let band = NullBand::from_distribution(&dist, &probs)?;
                let per = significance(&real, &dist, SignificanceMode::PerBlock)?;
                let whole = significance(&real, &dist, SignificanceMode::Aggregate)?;
                let n_failed: usize = dist.replications.iter().map(|r| r.n_failed()).sum();
                ctx.report(
                    &format!("null_{}_{}", slug(mname), slug(nname)),
                    &NullReport {
                        method: mname,
                        null: nname,
                        n_replications: dist.n_replications(),
                        band: &band,
                        per_block: &per,
                        aggregate: &whole[0],
                        replication_means: dist.replication_means(),
                        failed_blocks: n_failed,
                        replications: keep.then_some(dist.replications.as_slice()),
                    },
                )?;
                let by_start: BTreeMap<i32, &crate::validation::Exceedance> = per
                    .iter()
                    .filter_map(|e| e.block.map(|b| (b.years.start, e)))
                    .collect();
                for (row, b) in band.rows.iter().zip(&real.per_block) {
                    let _ = write!(
                        blocks,
                        "{mname},{nname},{},{},{},{}",
                        row.block.years.start,
                        row.block.years.end,
                        row.block.mode.as_str(),
                        opt(b.rmse)
                    );
                    for q in &row.quantiles {
                        let _ = write!(blocks, ",{q}");
                    }
                    match by_start.get(&row.block.years.start) {
                        Some(e) => {
                            let _ = writeln!(blocks, ",{},{},{},{}", e.count, e.n, e.raw, e.corrected);
                        }
                        None => blocks.push_str(",,,,\n"),
                    }
                }
                let e = &whole[0];
                let _ = writeln!(
                    agg,
                    "{mname},{nname},{},{},{},{},{},{}",
                    opt(real.mean),
                    stats::median(&dist.replication_means()),
                    e.count,
                    e.n,
                    e.raw,
                    e.corrected
                );
                if n_failed > 0 {
                    return Err(Error::Numeric(format!("{n_failed} null holdout blocks failed")));
                }
                Ok(())
            });
        }
    }
    ctx.table("cps_nulls", blocks);
    ctx.table("significance", agg);
    Ok(())
}

// ---------------------------------------------------------------- tingley

#[derive(Clone, Debug, Serialize)]
struct TingleyCell {
    setting: f64,
    replicate: usize,
    methods: Vec<String>,
    reports: Vec<RmseReport>,
}

impl TingleyCell {
    fn mean(&self, i: usize) -> Option<f64> {
        self.reports[i].mean
    }
}

struct TingleyRun<'a> {
    cal: YearRange,
    scheme: &'a HoldoutScheme,
    phi: &'a [f64],
    target: Option<&'a AnnualSeries>,
    replicates: usize,
    methods: &'a [(String, MethodConfig)],
}

/// One setting of a Tingley sweep: replicate `r` draws its target from
/// stream `[1, r]` (shared across settings) and its proxies from
/// `[2, setting, r]`.
fn tingley_setting(run: &TingleyRun, si: usize, setting: f64, cfg: &TingleyConfig, seed: Seed) -> Result<Vec<TingleyCell>> {
    (0..run.replicates)
        .into_par_iter()
        .map(|r| {
            let target = match run.target {
                Some(t) => t.clone(),
                None => synthetic_target(run.phi, run.cal, &run.cal, seed.derive_path(&[S_TARGET, r as u64]))?,
            };
            let x = gen_tingley(&target, cfg, seed.derive_path(&[S_PROXIES, si as u64, r as u64]))?;
            let score = seed.derive_path(&[S_SCORE, si as u64, r as u64]);
            let reports = run
                .methods
                .iter()
                .map(|(_, m)| rmse_profile(&Pipeline::new(m.clone()), &x, &target, run.scheme, "tingley", score))
                .collect();
            Ok(TingleyCell {
                setting,
                replicate: r,
                methods: run.methods.iter().map(|(n, _)| n.clone()).collect(),
                reports,
            })
        })
        .collect()
}

fn tingley_target(ctx: &Ctx, cal: &YearRange) -> Result<Option<AnnualSeries>> {
    load_target(ctx)?.map(|t| t.subseries(cal)).transpose()
}

fn mean_of(cells: &[TingleyCell], i: usize) -> Option<f64> {
    let v: Vec<f64> = cells.iter().filter_map(|c| c.mean(i)).collect();
    (!v.is_empty()).then(|| stats::mean(&v))
}

#[derive(Serialize)]
struct TingleySummaryRow {
    sigma_omega: f64,
    mean_rmse: BTreeMap<String, Option<f64>>,
    ratio_cv_to_tingley: Option<f64>,
    replicates: usize,
}

fn tingley(ctx: &mut Ctx) -> Result<()> {
    let cal = ctx.params.range("calibration", CALIBRATION)?;
    let scheme = scheme(ctx, cal, 30)?;
    let omegas: Vec<f64> = ctx.params.get("sigma_omegas", vec![0.25, 0.5, 1.0])?;
    let sigma_beta = ctx.params.get("sigma_beta", 0.0)?;
    let n = ctx.params.get("n_series", 1138usize)?;
    let replicates = ctx.params.get("replicates", 20usize)?;
    let cv = cv_shape(ctx, 1)?;
    let phi: Vec<f64> = ctx.params.get("target_phi", vec![0.5, 0.2])?;
    let target = tingley_target(ctx, &cal)?;
    let methods: Vec<(String, MethodConfig)> = ["lasso_cv", "lasso_tingley", "composite"]
        .iter()
        .map(|m| parse_method(m, cv.0, cv.1).map(|c| (m.to_string(), c)))
        .collect::<Result<_>>()?;
    let run = TingleyRun {
        cal,
        scheme: &scheme,
        phi: &phi,
        target: target.as_ref(),
        replicates,
        methods: &methods,
    };

    let mut rows = String::from("sigma_omega,replicate,method,mean_rmse,failed_blocks\n");
    let mut summary = String::from("sigma_omega,lasso_cv,lasso_tingley,composite,ratio_cv_to_tingley\n");
    let mut all = Vec::new();
    let mut summary_rows = Vec::new();
    for (si, &so) in omegas.iter().enumerate() {
        let cfg = TingleyConfig::new(so, sigma_beta, n);
        let seed = ctx.seed;
        let cells = ctx.stage(&format!("sigma_omega={so}"), |_| {
            let cells = tingley_setting(&run, si, so, &cfg, seed)?;
            Ok(cells)
        });
        let Some(cells) = cells else { continue };
        for c in &cells {
            for (i, (m, _)) in methods.iter().enumerate() {
                let _ = writeln!(rows, "{so},{},{m},{},{}", c.replicate, opt(c.mean(i)), c.reports[i].n_failed());
            }
        }
        let means: Vec<Option<f64>> = (0..methods.len()).map(|i| mean_of(&cells, i)).collect();
        let ratio = match (means[0], means[1]) {
            (Some(a), Some(b)) if b > 0.0 => Some(a / b),
            _ => None,
        };
        let _ = writeln!(summary, "{so},{},{},{},{}", opt(means[0]), opt(means[1]), opt(means[2]), opt(ratio));
        summary_rows.push(TingleySummaryRow {
            sigma_omega: so,
            mean_rmse: methods.iter().map(|(m, _)| m.clone()).zip(means).collect(),
            ratio_cv_to_tingley: ratio,
            replicates: cells.len(),
        });
        let refs: Vec<&RmseReport> = cells.iter().flat_map(|c| c.reports.iter()).collect();
        if let Err(e) = failed_blocks(&refs) {
            ctx.stage(&format!("sigma_omega={so}:blocks"), |_| Err::<(), _>(e));
        }
        all.extend(cells);
    }
    ctx.table("tingley", rows);
    ctx.table("tingley_summary", summary);
    ctx.report("tingley_summary", &summary_rows)?;
    ctx.report("tingley_profiles", &all)?;
    Ok(())
}

#[derive(Serialize)]
struct PerturbedRow {
    sigma_beta: f64,
    mean_composite: Option<f64>,
    mean_lasso: Option<f64>,
    mean_ratio: Option<f64>,
    median_ratio: Option<f64>,
    n_ratio_above_one: usize,
    n: usize,
}

#[derive(Serialize)]
struct PerturbedSummary {
    sigma_omega: f64,
    rows: Vec<PerturbedRow>,
    /// Rank correlation between σ_β and the mean ratio across settings.
    spearman_settings: Option<f64>,
    /// Rank correlation over every (σ_β, replicate ratio) pair.
    spearman_all: Option<f64>,
}

fn tingley_perturbed(ctx: &mut Ctx) -> Result<()> {
    let cal = ctx.params.range("calibration", CALIBRATION)?;
    let scheme = scheme(ctx, cal, 30)?;
    let betas: Vec<f64> = ctx.params.get("sigma_betas", vec![1.0 / 3.0, 1.0, 3.0, 9.0, 27.0])?;
    let so = ctx.params.get("sigma_omega", 0.25)?;
    let n = ctx.params.get("n_series", 1138usize)?;
    let replicates = ctx.params.get("replicates", 20usize)?;
    let cv = cv_shape(ctx, 1)?;
    let phi: Vec<f64> = ctx.params.get("target_phi", vec![0.5, 0.2])?;
    let target = tingley_target(ctx, &cal)?;
    let methods: Vec<(String, MethodConfig)> = ["composite", "lasso_cv"]
        .iter()
        .map(|m| parse_method(m, cv.0, cv.1).map(|c| (m.to_string(), c)))
        .collect::<Result<_>>()?;
    let run = TingleyRun {
        cal,
        scheme: &scheme,
        phi: &phi,
        target: target.as_ref(),
        replicates,
        methods: &methods,
    };

    let mut rows = String::from("sigma_beta,replicate,composite_rmse,lasso_rmse,ratio\n");
    let mut summary = String::from("sigma_beta,mean_composite,mean_lasso,mean_ratio,median_ratio,n_ratio_above_one,n\n");
    let mut out_rows = Vec::new();
    let mut pairs: (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
    let mut all = Vec::new();
    for (si, &sb) in betas.iter().enumerate() {
        let cfg = TingleyConfig::new(so, sb, n);
        let seed = ctx.seed;
        let Some(cells) = ctx.stage(&format!("sigma_beta={sb}"), |_| tingley_setting(&run, si, sb, &cfg, seed)) else {
            continue;
        };
        let mut ratios = Vec::new();
        for c in &cells {
            let ratio = match (c.mean(0), c.mean(1)) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                _ => None,
            };
            if let Some(r) = ratio {
                ratios.push(r);
                pairs.0.push(sb);
                pairs.1.push(r);
            }
            let _ = writeln!(rows, "{sb},{},{},{},{}", c.replicate, opt(c.mean(0)), opt(c.mean(1)), opt(ratio));
        }
        let row = PerturbedRow {
            sigma_beta: sb,
            mean_composite: mean_of(&cells, 0),
            mean_lasso: mean_of(&cells, 1),
            mean_ratio: (!ratios.is_empty()).then(|| stats::mean(&ratios)),
            median_ratio: (!ratios.is_empty()).then(|| stats::median(&ratios)),
            n_ratio_above_one: ratios.iter().filter(|&&r| r > 1.0).count(),
            n: ratios.len(),
        };
        let _ = writeln!(
            summary,
            "{sb},{},{},{},{},{},{}",
            opt(row.mean_composite),
            opt(row.mean_lasso),
            opt(row.mean_ratio),
            opt(row.median_ratio),
            row.n_ratio_above_one,
            row.n
        );
        out_rows.push(row);
        let refs: Vec<&RmseReport> = cells.iter().flat_map(|c| c.reports.iter()).collect();
        if let Err(e) = failed_blocks(&refs) {
            ctx.stage(&format!("sigma_beta={sb}:blocks"), |_| Err::<(), _>(e));
        }
        all.extend(cells);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = out_rows
        .iter()
        .filter_map(|r| r.mean_ratio.map(|m| (r.sigma_beta, m)))
        .unzip();
    let s = PerturbedSummary {
        sigma_omega: so,
        spearman_settings: stats::spearman(&xs, &ys),
        spearman_all: stats::spearman(&pairs.0, &pairs.1),
        rows: out_rows,
    };
    ctx.table("tingley_perturbed", rows);
    ctx.table("tingley_perturbed_summary", summary);
    ctx.report("tingley_perturbed_summary", &s)?;
    ctx.report("tingley_perturbed_profiles", &all)?;
    Ok(())
}

// ---------------------------------------------------------------- smerdon

fn parse_setting(s: &str) -> Result<(f64, NoiseColor)> {
    let (f, c) = s
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("setting '{s}' is not <fraction>:<red|white>")))?;
    let f: f64 = f
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad noise fraction in '{s}'")))?;
    let c = match c.trim() {
        "red" => NoiseColor::Red,
        "white" => NoiseColor::White,
        _ => return Err(Error::Config(format!("bad noise colour in '{s}'"))),
    };
    Ok((f, c))
}

#[derive(Serialize)]
struct SmerdonRow {
    setting: String,
    noise_fraction: f64,
    method: String,
    n_columns: usize,
    in_sample_rmse: Option<f64>,
    holdout: RmseReport,
}

fn in_sample_rmse(method: &MethodConfig, x: &ProxyMatrix, y: &AnnualSeries, cal: &YearRange, seed: Seed) -> Result<f64> {
    let fitted = fit_method(method, x, y, cal, None, seed)?;
    let pred = predict(&fitted.model, PredictInput::Proxies(x), cal)?;
    let errs: Vec<f64> = cal
        .years()
        .filter_map(|t| Some(pred.get(t)? - y.get(t)?))
        .collect();
    if errs.len() != cal.len() {
        return Err(Error::Coverage("in-sample prediction has gaps".into()));
    }
    Ok(stats::rmse(errs))
}

fn smerdon(ctx: &mut Ctx, variant: CorruptionVariant) -> Result<()> {
    let cal = ctx.params.range("calibration", CALIBRATION)?;
    let scheme = scheme(ctx, cal, 30)?;
    let default_settings: &[&str] = match variant {
        CorruptionVariant::ColumnAppend => &["0.5:white"],
        _ => &["0.86:red", "0.94:white"],
    };
    let settings: Vec<String> = ctx
        .params
        .get("settings", default_settings.iter().map(|s| s.to_string()).collect())?;
    let parsed: Vec<(f64, NoiseColor)> = settings.iter().map(|s| parse_setting(s)).collect::<Result<_>>()?;
    let sigma_beta = if variant == CorruptionVariant::RandomSlope {
        ctx.params.get("sigma_beta", 1.0)?
    } else {
        0.0
    };
    let red_phi = ctx.params.get("red_phi", CorruptionSpec::DEFAULT_RED_PHI)?;
    let cv = cv_shape(ctx, 10)?;
    let methods = methods(ctx, &["lasso", "cps"], cv)?;

    let (target, local) = if ctx.is_real() {
        let t = require(load_target(ctx)?, "target")?;
        let l = require(load_matrix_input(ctx, "local_temps", SeriesKind::LocalTemperature)?, "local_temps")?;
        (t, l.subrange(&cal)?)
    } else {
        let phi: Vec<f64> = ctx.params.get("target_phi", vec![0.5, 0.2])?;
        let n = ctx.params.get("n_local", 283usize)?;
        let corr: Vec<f64> = ctx.params.get("local_corr", vec![0.3, 0.8])?;
        let lphi: Vec<f64> = ctx.params.get("local_phi", vec![0.2, 0.6])?;
        let t = synthetic_target(&phi, cal, &cal, ctx.seed.derive(S_TARGET))?;
        let l = signal_columns(
            &t,
            n,
            pair(&corr, "local_corr")?,
            pair(&lphi, "local_phi")?,
            SeriesKind::LocalTemperature,
            "local_",
            ctx.seed.derive(S_PROXIES),
        )?;
        (t, l)
    };

    let name = match variant {
        CorruptionVariant::SnrMix => "smerdon_snr",
        CorruptionVariant::ColumnAppend => "smerdon_append",
        CorruptionVariant::RandomSlope => "smerdon_slope",
    };
    let mut table = String::from("setting,noise_fraction,method,n_columns,in_sample_rmse,holdout_mean_rmse\n");
    let mut rows = Vec::new();
    for (si, (label, &(f, color))) in settings.iter().zip(&parsed).enumerate() {
        let Some(mut x) = ctx.stage(&format!("corrupt:{label}"), |ctx| {
            let mut spec = CorruptionSpec::new(f, color, variant);
            spec.red_phi = red_phi;
            spec.sigma_beta = sigma_beta;
            corrupt_temperatures(&local, &spec, ctx.seed.derive_path(&[S_CORRUPT, si as u64]))
        }) else {
            continue;
        };
        // appended noise columns get latitudes so that cosine CPS can weight them
        let mut rng = ctx.seed.derive_path(&[S_CORRUPT, si as u64, 1]).rng();
        for c in x.columns_mut() {
            if c.latitude.is_none() {
                c.latitude = Some(rng.random_range(5.0..75.0));
                c.longitude = Some(0.0);
            }
        }
        for (mi, (mname, method)) in methods.iter().enumerate() {
            let seed = ctx.seed;
            let Some(row) = ctx.stage(&format!("{label}:{mname}"), |_| {
                let ins = in_sample_rmse(method, &x, &target, &cal, seed.derive_path(&[S_SCORE, si as u64, mi as u64]))?;
                let holdout = rmse_profile(
                    &Pipeline::new(method.clone()),
                    &x,
                    &target,
                    &scheme,
                    label,
                    seed.derive_path(&[S_HOLDOUT, si as u64, mi as u64]),
                );
                Ok(SmerdonRow {
                    setting: label.clone(),
                    noise_fraction: f,
                    method: mname.clone(),
                    n_columns: x.n_series(),
                    in_sample_rmse: Some(ins),
                    holdout,
                })
            }) else {
                continue;
            };
            let _ = writeln!(
                table,
                "{label},{f},{mname},{},{},{}",
                row.n_columns,
                opt(row.in_sample_rmse),
                opt(row.holdout.mean)
            );
            if let Err(e) = failed_blocks(&[&row.holdout]) {
                ctx.stage(&format!("{label}:{mname}:blocks"), |_| Err::<(), _>(e));
            }
            rows.push(row);
        }
    }
    ctx.table(name, table);
    ctx.report(name, &rows)?;
    Ok(())
}

// ---------------------------------------------------------------- centering

#[derive(Serialize)]
struct CenteringRow {
    replicate: usize,
    method: String,
    correct: RmseReport,
    bug: RmseReport,
}

#[derive(Serialize)]
struct CenteringSummary {
    method: String,
    replicates: usize,
    n_bug_worse: usize,
    mean_correct: f64,
    mean_bug: f64,
    /// Mean of `bug / correct - 1` over replicates.
    mean_relative_increase: f64,
}

fn centering_bug(ctx: &mut Ctx) -> Result<()> {
    let cal = ctx.params.range("calibration", CALIBRATION)?;
    let reference = ctx.params.range("reference", (1961, 1990))?;
    if !cal.contains_range(&reference) {
        return Err(Error::Config(format!("reference {reference} outside calibration {cal}")));
    }
    let scheme = scheme(ctx, cal, 30)?;
    let cv = cv_shape(ctx, 10)?;
    let methods = methods(ctx, &["cps"], cv)?;
    // (target, proxies) per replicate
    let data: Vec<(AnnualSeries, ProxyMatrix)> = if ctx.is_real() {
        vec![target_and_proxies(ctx, &cal, cal, &STANDARD)?]
    } else {
        let replicates = ctx.params.get("replicates", 50usize)?;
        let trend = ctx.params.get("trend", 2.0)?;
        // share of the trend visible to the proxies
        let proxy_trend = ctx.params.get("proxy_trend", 0.0)?;
        let s = synth_params(ctx, &STANDARD)?;
        let seed = ctx.seed;
        let n_years = cal.len() as f64;
        (0..replicates as u64)
            .into_par_iter()
            .map(|r| {
                let base = synthetic_target(&s.phi, cal, &cal, seed.derive_path(&[S_TARGET, r]))?;
                let ramp = |share: f64| {
                    let v = base.raw_values();
                    let v = v.iter().enumerate().map(|(i, v)| v + share * trend * i as f64 / (n_years - 1.0));
                    AnnualSeries::new(cal.start, v.collect())
                };
                let y = ramp(1.0)?;
                let x = signal_columns(
                    &ramp(proxy_trend)?,
                    s.n,
                    (s.signal, s.signal),
                    s.noise_phi,
                    SeriesKind::Pseudoproxy,
                    "pp_",
                    seed.derive_path(&[S_PROXIES, r]),
                )?;
                Ok((y, x))
            })
            .collect::<Result<_>>()?
    };
    let mut table = String::from("replicate,method,correct_rmse,bug_rmse,bug_worse\n");
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (mi, (mname, method)) in methods.iter().enumerate() {
        let seed = ctx.seed;
        let Some(pairs) = ctx.stage(&format!("method:{mname}"), |_| {
            let out: Vec<(RmseReport, RmseReport)> = data
                .par_iter()
                .enumerate()
                .map(|(r, (y, x))| {
                    let s = seed.derive_path(&[S_SCORE, r as u64, mi as u64]);
                    let good = Pipeline::new(method.clone()).with_centering(CenteringSpec::observed(reference));
                    let bad = Pipeline::new(method.clone()).with_centering(CenteringSpec::fitted_bug(reference));
                    (
                        rmse_profile(&good, x, y, &scheme, "proxy", s),
                        rmse_profile(&bad, x, y, &scheme, "proxy", s),
                    )
                })
                .collect();
            let refs: Vec<&RmseReport> = out.iter().flat_map(|(a, b)| [a, b]).collect();
            failed_blocks(&refs)?;
            Ok(out)
        }) else {
            continue;
        };
        let mut worse = 0;
        let (mut mc, mut mb, mut rel) = (Vec::new(), Vec::new(), Vec::new());
        for (r, (good, bad)) in pairs.into_iter().enumerate() {
            let (Some(g), Some(b)) = (good.mean, bad.mean) else { continue };
            let w = b > g;
            worse += w as usize;
            mc.push(g);
            mb.push(b);
            rel.push(b / g - 1.0);
            let _ = writeln!(table, "{r},{mname},{g},{b},{w}");
            rows.push(CenteringRow {
                replicate: r,
                method: mname.clone(),
                correct: good,
                bug: bad,
            });
        }
        summaries.push(CenteringSummary {
            method: mname.clone(),
            replicates: mc.len(),
            n_bug_worse: worse,
            mean_correct: stats::mean(&mc),
            mean_bug: stats::mean(&mb),
            mean_relative_increase: stats::mean(&rel),
        });
    }
    ctx.table("centering_bug", table);
    ctx.report("centering_bug_summary", &summaries)?;
    ctx.report("centering_bug", &rows)?;
    Ok(())
}

// ---------------------------------------------------------------- bayes

/// `ar2_pc10`, `pc10`, `ar2`.
fn parse_model(s: &str) -> Result<(usize, usize)> {
    let mut p = 0;
    let mut k = 0;
    for part in s.split('_') {
        let bad = || Error::Config(format!("bad model '{s}' (expected e.g. ar2_pc10)"));
        if let Some(v) = part.strip_prefix("ar") {
            p = v.parse().map_err(|_| bad())?;
        } else if let Some(v) = part.strip_prefix("pc") {
            k = v.parse().map_err(|_| bad())?;
        } else {
            return Err(bad());
        }
    }
    Ok((p, k))
}

#[derive(Serialize)]
struct ParamSummary {
    name: String,
    mean: f64,
    lower: f64,
    upper: f64,
    rhat: f64,
}

#[derive(Serialize)]
struct PosteriorSummary {
    model: String,
    ar_order: usize,
    k: usize,
    n_obs: usize,
    n_draws: usize,
    chains: usize,
    converged: bool,
    level: f64,
    parameters: Vec<ParamSummary>,
    mean_band_width: BTreeMap<String, f64>,
    mean_band_width_smoothed: BTreeMap<String, f64>,
}

fn bayes_backcast(ctx: &mut Ctx) -> Result<()> {
    let cal = ctx.params.range("calibration", CALIBRATION)?;
    let years = ctx.params.range("years", (998, CALIBRATION.1))?;
    if years.end != cal.end || years.start >= cal.start {
        return Err(Error::Config(format!(
            "years {years} must end with calibration {cal} and start before it"
        )));
    }
    let past = YearRange::new(years.start, cal.start - 1)?;
    let k = ctx.params.get("k", 10usize)?;
    let models: Vec<String> = ctx.params.get("models", vec!["ar2_pc10".to_string(), "pc10".to_string()])?;
    let parsed: Vec<(usize, usize)> = models.iter().map(|m| parse_model(m)).collect::<Result<_>>()?;
    let iterations = ctx.params.get("iterations", 5000usize)?;
    let burn_in = ctx.params.get("burn_in", 2500usize)?;
    let chains = ctx.params.get("chains", 4usize)?;
    let thin = ctx.params.get("thin", 1usize)?;
    let max_paths = ctx.params.get("max_paths", 1000usize)?;
    let level = ctx.params.get("level", 0.95)?;
    let window = ctx.params.get("window", 31usize)?;
    let write_paths = ctx.params.get("write_paths", false)?;
    if let Some(&(_, kk)) = parsed.iter().find(|(_, kk)| *kk > k) {
        return Err(Error::Config(format!("a model asks for {kk} PCs but k = {k}")));
    }
    let (target, proxies) = target_and_proxies(ctx, &cal, years, &STANDARD)?;

    let scores = if parsed.iter().any(|(_, kk)| *kk > 0) {
        let basis = ctx.stage("pca", |_| pca_decompose(&proxies, k, &cal));
        match basis {
            Some(b) => Some(b.project(&proxies)),
            None => return Ok(()),
        }
    } else {
        None
    };
    let mut decomp = String::from("model,window,total,epsilon_only,beta_only\n");
    for (mi, (name, &(p, kk))) in models.iter().zip(&parsed).enumerate() {
        let seed = ctx.seed;
        let scores = scores.as_ref();
        let done = ctx.stage(&format!("model:{name}"), |ctx| {
            let mut spec = BayesSpec::new(p, kk, seed.derive_path(&[S_MCMC, mi as u64]));
            spec.mcmc.iterations = iterations;
            spec.mcmc.burn_in = burn_in;
            spec.mcmc.chains = chains;
            spec.mcmc.thin = thin;
            let pcs = if kk > 0 { scores } else { None };
            let post = fit_bayes(&target, pcs, &cal, &spec)?;
            let dec = Decomposition::simulate(&post, pcs, &past, Some(max_paths), seed.derive_path(&[S_PATHS, mi as u64]))?;
            let raw = dec.bands(level);
            let smooth = dec.smooth(window)?.bands(level);
            let modes = [PathMode::Total, PathMode::EpsilonOnly, PathMode::BetaOnly];
            let widths = |b: &crate::bayes::UncertaintyBands| -> BTreeMap<String, f64> {
                modes.iter().map(|m| (m.as_str().to_string(), b.mean_width(*m))).collect()
            };
            let mean = post.posterior_mean().flat();
            let iv = post.intervals(level);
            let summary = PosteriorSummary {
                model: name.clone(),
                ar_order: p,
                k: kk,
                n_obs: post.n_obs,
                n_draws: post.draws.len(),
                chains: post.chains,
                converged: post.converged,
                level,
                parameters: post
                    .parameter_names()
                    .into_iter()
                    .enumerate()
                    .map(|(j, n)| ParamSummary {
                        name: n,
                        mean: mean[j],
                        lower: iv[j].0,
                        upper: iv[j].1,
                        rhat: post.rhat[j].rhat,
                    })
                    .collect(),
                mean_band_width: widths(&raw),
                mean_band_width_smoothed: widths(&smooth),
            };
            ctx.report(&format!("bayes_{name}"), &summary)?;
            ctx.table(&format!("bands_{name}"), bands_csv(&raw));
            ctx.table(&format!("bands_{name}_smoothed"), bands_csv(&smooth));
            if write_paths {
                ctx.table(&format!("paths_{name}"), ensemble_csv(&dec.total));
            }
            if !post.converged {
                log::warn!("model {name}: chains have not converged");
            }
            Ok((raw, smooth))
        });
        if let Some((raw, smooth)) = done {
            for b in [&raw, &smooth] {
                let _ = writeln!(
                    decomp,
                    "{name},{},{},{},{}",
                    b.window,
                    b.mean_width(PathMode::Total),
                    b.mean_width(PathMode::EpsilonOnly),
                    b.mean_width(PathMode::BetaOnly)
                );
            }
        }
    }
    ctx.table("decomposition", decomp);
    Ok(())
}

// ---------------------------------------------------------------- pc criteria

#[derive(Serialize)]
struct RandomStudy {
    n_cases: usize,
    n_strict: usize,
    n_violations: usize,
    share_strict: f64,
}

#[derive(Serialize)]
struct PcReport {
    spectrum: Vec<f64>,
    selection: Vec<crate::pcselect::SelectionRow>,
    random: RandomStudy,
}

fn pc_criteria(ctx: &mut Ctx) -> Result<()> {
    let cal = ctx.params.range("calibration", CALIBRATION)?;
    let thresholds: Vec<f64> = ctx.params.get("thresholds", vec![0.7, 0.8, 0.9])?;
    let n_random = ctx.params.get("random_spectra", 100usize)?;
    let dim = ctx.params.get("random_dim", 20usize)?;
    let spectrum = match ctx.params.opt::<Vec<f64>>("eigenvalues")? {
        Some(v) => Spectrum::new(v)?,
        None => {
            let proxies = match load_matrix_input(ctx, "proxies", SeriesKind::Proxy)? {
                Some(p) => p,
                None => target_and_proxies(ctx, &cal, cal, &STANDARD)?.1,
            };
            Spectrum::sorted(pca_decompose(&proxies, 1, &cal)?.spectrum)?
        }
    };
    let selection = selection_table(&spectrum, &thresholds)?;
    ctx.table("pc_selection", table_csv(&selection));

    let mut table = String::from("spectrum,threshold,k_variance,k_squared_bug\n");
    let (mut n, mut strict, mut bad) = (0, 0, 0);
    for s in 0..n_random {
        let mut rng = ctx.seed.derive_path(&[S_SPECTRA, s as u64]).rng();
        let gamma: f64 = rng.random_range(0.5..3.0);
        let vals: Vec<f64> = (0..dim.max(1))
            .map(|_| (-(1.0 - rng.random::<f64>()).ln()).powf(gamma))
            .collect();
        let sp = Spectrum::sorted(vals)?;
        for &t in &thresholds {
            let kv = select_k(&sp, Criterion::VarianceThreshold, t)?;
            let kb = select_k(&sp, Criterion::VarianceThresholdSquaredBug, t)?;
            n += 1;
            strict += (kb < kv) as usize;
            bad += (kb > kv) as usize;
            let _ = writeln!(table, "{s},{t},{kv},{kb}");
        }
    }
    ctx.table("pc_random", table);
    ctx.report(
        "pc_criteria",
        &PcReport {
            spectrum: spectrum.values().to_vec(),
            selection,
            random: RandomStudy {
                n_cases: n,
                n_strict: strict,
                n_violations: bad,
                share_strict: if n > 0 { strict as f64 / n as f64 } else { 0.0 },
            },
        },
    )?;
    Ok(())
}

// ---------------------------------------------------------------- sim fidelity

#[derive(Serialize)]
struct FidelityRow {
    stat: String,
    sim: String,
    n_real: usize,
    n_sim: usize,
    ks: f64,
    ks_threshold: Option<f64>,
    exceeds_band: Option<bool>,
}

fn stat_values(m: &ProxyMatrix, stat: StatName, target: &AnnualSeries, window: &YearRange) -> Result<Vec<f64>> {
    (0..m.n_series())
        .map(|j| series_stat(&m.column(j), &m.columns()[j].name, stat, Some(target), window).map(|s| s.value))
        .collect()
}

fn sim_fidelity(ctx: &mut Ctx) -> Result<()> {
    let cal = ctx.params.range("calibration", CALIBRATION)?;
    let sims: Vec<String> = ctx.params.get(
        "sims",
        ["white", "ar1(0.25)", "ar1(0.4)", "ar1_empirical", "brownian"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )?;
    let stat_names: Vec<String> = ctx
        .params
        .get("stats", StatName::ALL.iter().map(|s| s.as_str().to_string()).collect())?;
    let stats_list: Vec<StatName> = stat_names.iter().map(|s| StatName::from_str(s)).collect::<Result<_>>()?;
    let n_boot = ctx.params.get("n_boot", 200usize)?;
    let block_length = ctx.params.get("block_length", 10usize)?;
    let (target, proxies) = target_and_proxies(ctx, &cal, cal, &STANDARD)?;

    let mut table = String::from("stat,sim,n_real,n_sim,ks,ks_threshold,exceeds_band\n");
    let mut rows = Vec::new();
    for (si, sim) in sims.iter().enumerate() {
        let seed = ctx.seed;
        let Some(drawn) = ctx.stage(&format!("draw:{sim}"), |_| {
            NullSpec::like(parse_null(sim, &proxies, &cal)?, &proxies).draw(seed.derive_path(&[S_SIM, si as u64]))
        }) else {
            continue;
        };
        for (ti, &stat) in stats_list.iter().enumerate() {
            let Some(row) = ctx.stage(&format!("{sim}:{}", stat.as_str()), |ctx| {
                let real = stat_values(&proxies, stat, &target, &cal)?;
                let simulated = stat_values(&drawn, stat, &target, &cal)?;
                let series: Vec<AnnualSeries> = (0..drawn.n_series()).map(|j| drawn.column(j)).collect();
                let cfg = BootstrapConfig {
                    block_length,
                    n_boot,
                    seed: seed.derive_path(&[S_BOOT, si as u64, ti as u64]),
                };
                let boot = bootstrap_null(&series, stat, Some(&target), &cal, &cfg)?;
                let nulls: Vec<Vec<f64>> = (0..boot.n_boot).map(|b| boot.replicate(b)).collect();
                let qq = qq_compare(&simulated, &real, &nulls)?;
                ctx.table(&format!("qq_{}_{}", stat.as_str(), slug(sim)), qq.to_csv());
                Ok(FidelityRow {
                    stat: stat.as_str().to_string(),
                    sim: sim.clone(),
                    n_real: real.len(),
                    n_sim: simulated.len(),
                    ks: qq.ks,
                    ks_threshold: qq.ks_threshold,
                    exceeds_band: qq.exceeds_band(),
                })
            }) else {
                continue;
            };
            let _ = writeln!(
                table,
                "{},{},{},{},{},{},{}",
                row.stat,
                row.sim,
                row.n_real,
                row.n_sim,
                row.ks,
                opt(row.ks_threshold),
                row.exceeds_band.map(|b| b.to_string()).unwrap_or_default()
            );
            rows.push(row);
        }
    }
    ctx.table("fidelity", table);
    ctx.report("fidelity", &rows)?;
    Ok(())
}
