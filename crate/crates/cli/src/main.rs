//! `proxy-recon`: reconstruction validation, null benchmarks, Bayesian
//! backcasts and the packaged studies from the command line.
//!
//! Exit status: 0 on success, 2 when some stages or grid cells failed, 1 on
//! a fatal error or bad usage.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use proxy_recon::data::{
    load_matrix, load_series, save_sidecar, write_matrix, write_series, AnnualSeries, MatrixSchema, ModeFilter,
    ProxyMatrix, SeriesKind, YearRange,
};
use proxy_recon::experiments::{self, parse_method, parse_null, signal_columns, synthetic_target, ExperimentSpec, Recipe, BUILD_ID};
use proxy_recon::pcselect::{selection_table, table_csv, Spectrum};
use proxy_recon::pseudoproxy::{gen_noise_matrix, gen_tingley, NoiseSpec, TingleyConfig};
use proxy_recon::solvers::pca_decompose;
use proxy_recon::validation::{robustness_grid, write_grid, GridSpec, GridTarget, NullSpec, Pipeline, PredictorSource};
use proxy_recon::Seed;

const OUTPUT_ENV: &str = "PROXY_RECON_OUTPUT_DIR";
const DEFAULT_OUTPUT: &str = "proxy-recon-out";

#[derive(Parser, Debug)]
#[command(name = "proxy-recon", about = "Proxy reconstruction validation and benchmarks")]
#[command(disable_version_flag = true, args_override_self = true)]
struct Cli {
    /// TOML config: global keys at top level, subcommand keys under
    /// `[<subcommand>]`. Flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, env = OUTPUT_ENV)]
    output_dir: Option<PathBuf>,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    /// Print the build identifier.
    #[arg(short = 'V', long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Holdout-block validation grid over methods, predictor sources and block lengths.
    Validate(ValidateArgs),
    /// CPS against null pseudoproxy families (cps_nulls study).
    Nulls(RecipeArgs),
    /// Bayesian backcast with uncertainty decomposition (bayes_backcast study).
    Bayes(RecipeArgs),
    /// Number of principal components kept by each retention criterion.
    Pcselect(PcselectArgs),
    /// Fidelity of simulated proxies to the real ones (sim_fidelity study).
    Diagnose(RecipeArgs),
    /// Any packaged study.
    Experiment(ExperimentArgs),
    /// Synthetic targets, nulls and pseudoproxies as CSV.
    Generate(GenerateArgs),
}

#[derive(Args, Debug, Default)]
struct RecipeArgs {
    /// Experiment spec (TOML) to start from.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    #[arg(long)]
    proxies: Option<PathBuf>,
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long)]
    local_temps: Option<PathBuf>,
    /// Recipe parameter, `key=value` (TOML value syntax); repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long, value_parser = parse_recipe)]
    recipe: Option<Recipe>,
    #[command(flatten)]
    common: RecipeArgs,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    proxies: PathBuf,
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long)]
    target: PathBuf,
    /// Method names, e.g. cps,lasso,lasso_tingley,pc_ols:5.
    #[arg(long, value_delimiter = ',', default_value = "cps,lasso")]
    methods: Vec<String>,
    /// Null families scored alongside the proxies, e.g. white,ar1(0.4),brownian.
    #[arg(long, value_delimiter = ',')]
    nulls: Vec<String>,
    #[arg(long, default_value_t = 100)]
    replications: usize,
    #[arg(long, default_value = "1850-1998", value_parser = parse_range)]
    calibration: YearRange,
    #[arg(long, value_delimiter = ',', default_value = "30")]
    block_lengths: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, value_delimiter = ',', default_value = "all", value_parser = parse_mode)]
    modes: Vec<ModeFilter>,
    #[arg(long, value_delimiter = ',', default_value = "0.025,0.5,0.975")]
    probabilities: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    cv_folds: usize,
    #[arg(long, default_value_t = 10)]
    cv_repetitions: usize,
    /// Reuse finished cells stored here.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct PcselectArgs {
    /// Eigenvalues, largest first.
    #[arg(long, value_delimiter = ',', conflicts_with = "proxies")]
    eigenvalues: Vec<f64>,
    /// Proxy matrix whose calibration-period spectrum is used instead.
    #[arg(long)]
    proxies: Option<PathBuf>,
    #[arg(long, default_value = "1850-1998", value_parser = parse_range)]
    calibration: YearRange,
    #[arg(long = "threshold", value_delimiter = ',', default_value = "0.7,0.8,0.9")]
    thresholds: Vec<f64>,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    White,
    Ar1,
    Brownian,
    /// Stationary AR target series.
    Target,
    /// Tingley proxies around `--target` (or a synthetic target).
    Tingley,
    /// Target plus AR1 noise at a fixed signal correlation.
    Signal,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_enum)]
    kind: Kind,
    #[arg(long)]
    years: usize,
    #[arg(long, default_value_t = 1)]
    series: usize,
    #[arg(long, default_value_t = 998)]
    start_year: i32,
    /// AR1 coefficient, or AR coefficients for `target`.
    #[arg(long, value_delimiter = ',', default_value = "0.4")]
    phi: Vec<f64>,
    #[arg(long, default_value_t = 0.25)]
    sigma_omega: f64,
    #[arg(long, default_value_t = 0.0)]
    sigma_beta: f64,
    #[arg(long, default_value_t = 0.3)]
    signal: f64,
    /// Target series for `tingley` and `signal`.
    #[arg(long)]
    target: Option<PathBuf>,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the column metadata sidecar.
    #[arg(long)]
    sidecar_out: Option<PathBuf>,
}

fn parse_range(s: &str) -> std::result::Result<YearRange, String> {
    let (a, b) = s
        .split_once(['-', ':'])
        .ok_or_else(|| format!("'{s}' is not START-END"))?;
    let a: i32 = a.trim().parse().map_err(|_| format!("bad year '{a}'"))?;
    let b: i32 = b.trim().parse().map_err(|_| format!("bad year '{b}'"))?;
    YearRange::new(a, b).map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> std::result::Result<ModeFilter, String> {
    match s {
        "all" => Ok(ModeFilter::All),
        "interpolated" => Ok(ModeFilter::Interpolated),
        "extrapolated" => Ok(ModeFilter::Extrapolated),
        _ => Err(format!("unknown mode '{s}' (all, interpolated, extrapolated)")),
    }
}

/// Flags synthesized from the config file, skipping any the user gave
/// (list flags would otherwise accumulate). `--set` entries are merged,
/// config first, so the user's win.
fn config_flags(path: &Path, subcommand: Option<&str>, given: &[&str]) -> Result<(Vec<String>, Vec<String>)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let table: toml::Table = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    let mut global = Vec::new();
    let mut local = Vec::new();
    let skip = |k: &str| k != "set" && k != "params" && given.contains(&format!("--{}", k.replace('_', "-")).as_str());
    for (k, v) in table.iter().filter(|(k, _)| !skip(k)) {
        match v {
            toml::Value::Table(t) => {
                if Some(k.as_str()) == subcommand {
                    for (k, v) in t.iter().filter(|(k, _)| !skip(k)) {
                        push_flag(&mut local, k, v)?;
                    }
                }
            }
            _ => push_flag(&mut global, k, v)?,
        }
    }
    Ok((global, local))
}

fn push_flag(out: &mut Vec<String>, key: &str, v: &toml::Value) -> Result<()> {
    let flag = format!("--{}", key.replace('_', "-"));
    let scalar = |v: &toml::Value| -> Result<String> {
        Ok(match v {
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => bail!("config key '{key}': unsupported value {other}"),
        })
    };
    match v {
        toml::Value::Boolean(true) => out.push(flag),
        toml::Value::Boolean(false) => {}
        // `set` is repeatable; other lists are comma-separated
        toml::Value::Array(items) if key == "set" => {
            for i in items {
                out.push(flag.clone());
                out.push(scalar(i)?);
            }
        }
        toml::Value::Array(items) => {
            let parts: Vec<String> = items.iter().map(scalar).collect::<Result<_>>()?;
            out.push(flag);
            out.push(parts.join(","));
        }
        toml::Value::Table(t) if key == "params" => {
            for (k, v) in t {
                out.push("--set".into());
                out.push(format!("{k}={v}"));
            }
        }
        other => {
            out.push(flag);
            out.push(scalar(other)?);
        }
    }
    Ok(())
}

const SUBCOMMANDS: [&str; 7] = ["validate", "nulls", "bayes", "pcselect", "diagnose", "experiment", "generate"];

/// argv with config-file flags spliced in.
fn expand_args(argv: Vec<String>) -> Result<Vec<String>> {
    let first = Cli::try_parse_from(&argv);
    let config = match &first {
        Ok(c) => c.config.clone(),
        Err(_) => argv
            .iter()
            .position(|a| a == "--config")
            .and_then(|i| argv.get(i + 1))
            .map(PathBuf::from)
            .or_else(|| argv.iter().find_map(|a| a.strip_prefix("--config=").map(PathBuf::from))),
    };
    let Some(config) = config else { return Ok(argv) };
    let sub_pos = argv.iter().position(|a| SUBCOMMANDS.contains(&a.as_str()));
    let sub = sub_pos.map(|i| argv[i].as_str());
    let given: Vec<&str> = argv
        .iter()
        .filter(|&a| a.starts_with("--")).map(|a| a.split('=').next().unwrap())
        .collect();
    let (global, local) = config_flags(&config, sub, &given)?;
    let mut out = vec![argv[0].clone()];
    out.extend(global);
    match sub_pos {
        Some(i) => {
            out.extend(argv[1..=i].iter().cloned());
            out.extend(local);
            out.extend(argv[i + 1..].iter().cloned());
        }
        None => out.extend(argv[1..].iter().cloned()),
    }
    Ok(out)
}

fn output_dir(cli: &Cli, spec: Option<&ExperimentSpec>) -> PathBuf {
    cli.output_dir
        .clone()
        .or_else(|| spec.and_then(|s| s.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
}

fn build_spec(cli: &Cli, recipe: Option<Recipe>, a: &RecipeArgs) -> Result<ExperimentSpec> {
    let mut spec = match &a.spec {
        Some(p) => ExperimentSpec::from_file(p)?,
        None => {
            let r = recipe.ok_or_else(|| anyhow!("give --recipe or --spec"))?;
            ExperimentSpec::new(r, cli.seed)
        }
    };
    if let Some(r) = recipe {
        if a.spec.is_some() && r != spec.recipe {
            bail!("--recipe {r} disagrees with the spec's recipe {}", spec.recipe);
        }
    }
    if a.spec.is_none() || cli.seed != 0 {
        spec.seed = cli.seed;
    }
    for (name, path) in [
        ("target", &a.target),
        ("proxies", &a.proxies),
        ("sidecar", &a.sidecar),
        ("local_temps", &a.local_temps),
    ] {
        if let Some(p) = path {
            spec.inputs.insert(name.to_string(), p.clone());
        }
    }
    for kv in &a.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{kv}'"))?;
        spec.set_param(k.trim(), v.trim())?;
    }
    spec.validate()?;
    Ok(spec)
}

fn run_recipe(cli: &Cli, recipe: Option<Recipe>, a: &RecipeArgs) -> Result<u8> {
    let spec = build_spec(cli, recipe, a)?;
    let bundle = experiments::run(&spec)?;
    let dir = output_dir(cli, Some(&spec));
    bundle.write(&dir)?;
    let failed = bundle.manifest.n_failed();
    log::info!(
        "{}: {} files written to {} ({} failed stages)",
        spec.recipe,
        bundle.files.len() + 1,
        dir.display(),
        failed
    );
    Ok(if failed > 0 { 2 } else { 0 })
}

fn validate(cli: &Cli, a: &ValidateArgs) -> Result<u8> {
    let schema = MatrixSchema {
        sidecar: a.sidecar.clone(),
        default_kind: SeriesKind::Proxy,
    };
    let proxies = load_matrix(&a.proxies, &schema)?;
    let target = load_series(&a.target)?;
    let methods = a
        .methods
        .iter()
        .map(|m| Ok(Pipeline::new(parse_method(m, a.cv_folds, a.cv_repetitions)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut sources = vec![PredictorSource::Proxies];
    for n in &a.nulls {
        sources.push(PredictorSource::Null {
            spec: NullSpec::like(parse_null(n, &proxies, &a.calibration)?, &proxies),
            n_replications: a.replications,
        });
    }
    let label = a
        .target
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "target".into());
    let spec = GridSpec {
        methods,
        sources,
        block_lengths: a.block_lengths.clone(),
        modes: a.modes.clone(),
        targets: vec![GridTarget { label, series: target }],
        calibration: a.calibration,
        stride: a.stride,
        band_probabilities: a.probabilities.clone(),
        seed: Seed::new(cli.seed),
    };
    let report = robustness_grid(&spec, &proxies, a.cache.as_deref())?;
    let dir = output_dir(cli, None);
    write_grid(&report, &dir)?;
    let failed = report.n_failed();
    log::info!("{} cells written to {} ({} failed)", report.cells.len(), dir.display(), failed);
    Ok(if failed > 0 { 2 } else { 0 })
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => std::fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => {
            let mut so = std::io::stdout().lock();
            so.write_all(bytes)?;
            so.flush()?;
            Ok(())
        }
    }
}

fn pcselect(a: &PcselectArgs) -> Result<u8> {
    let spectrum = match &a.proxies {
        Some(p) => {
            let m = load_matrix(
                p,
                &MatrixSchema {
                    sidecar: None,
                    default_kind: SeriesKind::Proxy,
                },
            )?;
            Spectrum::sorted(pca_decompose(&m, 1, &a.calibration)?.spectrum)?
        }
        None if a.eigenvalues.is_empty() => bail!("give --eigenvalues or --proxies"),
        None => Spectrum::new(a.eigenvalues.clone())?,
    };
    let rows = selection_table(&spectrum, &a.thresholds)?;
    emit(a.out.as_deref(), table_csv(&rows).as_bytes())?;
    Ok(0)
}

fn generate(cli: &Cli, a: &GenerateArgs) -> Result<u8> {
    if a.years == 0 {
        bail!("--years must be positive");
    }
    let years = YearRange::new(a.start_year, a.start_year + a.years as i32 - 1)?;
    let seed = Seed::new(cli.seed);
    let target = |s: Seed| -> Result<AnnualSeries> {
        match &a.target {
            Some(p) => Ok(load_series(p)?.subseries(&years)?),
            None => Ok(synthetic_target(&[0.5, 0.2], years, &years, s)?),
        }
    };
    let phi1 = || -> Result<f64> {
        match a.phi.as_slice() {
            [p] => Ok(*p),
            _ => bail!("--phi takes one coefficient for this kind"),
        }
    };
    let m: ProxyMatrix = match a.kind {
        Kind::Target => {
            let t = synthetic_target(&a.phi, years, &years, seed)?;
            let mut buf = Vec::new();
            write_series(&t, "target", &mut buf)?;
            emit(a.out.as_deref(), &buf)?;
            return Ok(0);
        }
        Kind::White => gen_noise_matrix(&NoiseSpec::White, years, a.series, seed)?,
        Kind::Ar1 => gen_noise_matrix(&NoiseSpec::ar1(phi1()?)?, years, a.series, seed)?,
        Kind::Brownian => gen_noise_matrix(&NoiseSpec::Brownian { standardize_over: None }, years, a.series, seed)?,
        Kind::Tingley => gen_tingley(
            &target(seed.derive(1))?,
            &TingleyConfig::new(a.sigma_omega, a.sigma_beta, a.series),
            seed.derive(2),
        )?,
        Kind::Signal => signal_columns(
            &target(seed.derive(1))?,
            a.series,
            (a.signal, a.signal),
            (phi1()?, phi1()?),
            SeriesKind::Pseudoproxy,
            "pp_",
            seed.derive(2),
        )?,
    };
    let mut buf = Vec::new();
    write_matrix(&m, &mut buf)?;
    emit(a.out.as_deref(), &buf)?;
    if let Some(p) = &a.sidecar_out {
        save_sidecar(&m, p)?;
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let Some(cmd) = &cli.command else {
        bail!("no subcommand given (try --help)");
    };
    match cmd {
        Command::Validate(a) => validate(cli, a),
        Command::Nulls(a) => run_recipe(cli, Some(Recipe::CpsNulls), a),
        Command::Bayes(a) => run_recipe(cli, Some(Recipe::BayesBackcast), a),
        Command::Diagnose(a) => run_recipe(cli, Some(Recipe::SimFidelity), a),
        Command::Experiment(a) => run_recipe(cli, a.recipe, &a.common),
        Command::Pcselect(a) => pcselect(a),
        Command::Generate(a) => generate(cli, a),
    }
}

fn parse_recipe(s: &str) -> std::result::Result<Recipe, String> {
    s.parse().map_err(|e: proxy_recon::Error| e.to_string())
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let argv = match expand_args(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    if cli.version {
        println!("{BUILD_ID}");
        return ExitCode::SUCCESS;
    }
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        eprintln!("error: thread pool: {e}");
        return ExitCode::from(1);
    }
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
