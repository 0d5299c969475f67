//! Packaged studies.
//!
//! A recipe resolves its declared inputs, generates stand-in data when none
//! are supplied (synthetic mode), runs its stages and returns a [`Bundle`]:
//! `manifest.json`, `reports/*.json` and `tables/*.csv`. Bundles contain no
//! timestamps or host details, so the same spec, seed and inputs always give
//! the same bytes.
//!
//! Synthetic stand-ins:
//! - target: AR2 with coefficients `target_phi` (default 0.5, 0.2) and unit
//!   innovations, standardized over the calibration period (149 years,
//!   1850-1998, by default);
//! - proxies: `signal * target + sqrt(1 - signal^2) * AR1` per column, with
//!   AR1 coefficients uniform on `noise_phi` and latitudes uniform on 5-75N;
//! - local temperatures: the same construction with per-column signal drawn
//!   uniformly from `local_corr`;
//! - Tingley proxies: `beta_i * target + N(0, sigma_omega^2)`.
//!
//! `cps_nulls` runs CPS and the fixed-lambda Lasso in a persistent setting
//! (AR1 target with phi 0.95, signal 0.05, proxy noise phi in 0.9-0.98),
//! where the null families separate for the Lasso. `centering_bug` adds a linear trend to the target over the
//! reference period while the proxies keep the untrended signal
//! (`proxy_trend`, default 0).

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::Seed;

mod params;
mod recipes;
mod synth;
#[cfg(test)]
mod tests;

pub use params::{parse_method, parse_null, parse_value, Params};
pub use synth::{signal_columns, synthetic_target};

/// Identifier embedded in every manifest and printed by `--version`.
pub const BUILD_ID: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recipe {
    CpsNulls,
    Tingley,
    TingleyPerturbed,
    SmerdonSnr,
    SmerdonAppend,
    SmerdonSlope,
    CenteringBug,
    BayesBackcast,
    PcCriteria,
    SimFidelity,
}

impl Recipe {
    pub const ALL: [Recipe; 10] = [
        Recipe::CpsNulls,
        Recipe::Tingley,
        Recipe::TingleyPerturbed,
        Recipe::SmerdonSnr,
        Recipe::SmerdonAppend,
        Recipe::SmerdonSlope,
        Recipe::CenteringBug,
        Recipe::BayesBackcast,
        Recipe::PcCriteria,
        Recipe::SimFidelity,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Recipe::CpsNulls => "cps_nulls",
            Recipe::Tingley => "tingley",
            Recipe::TingleyPerturbed => "tingley_perturbed",
            Recipe::SmerdonSnr => "smerdon_snr",
            Recipe::SmerdonAppend => "smerdon_append",
            Recipe::SmerdonSlope => "smerdon_slope",
            Recipe::CenteringBug => "centering_bug",
            Recipe::BayesBackcast => "bayes_backcast",
            Recipe::PcCriteria => "pc_criteria",
            Recipe::SimFidelity => "sim_fidelity",
        }
    }

    /// Input names the recipe understands.
    pub fn inputs(self) -> &'static [&'static str] {
        recipes::inputs(self)
    }

    /// Parameter keys the recipe understands.
    pub fn params(self) -> &'static [&'static str] {
        recipes::param_keys(self)
    }
}

impl fmt::Display for Recipe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Recipe {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Recipe::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Recipe::ALL.iter().map(|r| r.as_str()).collect();
                Error::Config(format!("unknown recipe '{s}' (expected one of {})", names.join(", ")))
            })
    }
}

/// What to run. Serialized as TOML:
///
/// ```toml
/// recipe = "tingley"
/// seed = 42
/// [inputs]
/// target = "cru.csv"
/// [params]
/// replicates = 20
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub recipe: Recipe,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub inputs: BTreeMap<String, PathBuf>,
    #[serde(default)]
    pub params: toml::Table,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn new(recipe: Recipe, seed: u64) -> Self {
        ExperimentSpec {
            recipe,
            seed,
            inputs: BTreeMap::new(),
            params: toml::Table::new(),
            output_dir: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("experiment spec: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Sets a parameter from its command-line text (TOML syntax, bare words
    /// taken as strings).
    pub fn set_param(&mut self, key: &str, raw: &str) -> Result<()> {
        self.params.insert(key.to_string(), parse_value(raw));
        self.check_keys()
    }

    pub fn with_param(mut self, key: &str, value: impl Into<toml::Value>) -> Self {
        self.params.insert(key.to_string(), value.into());
        self
    }

    pub fn with_input(mut self, name: &str, path: impl Into<PathBuf>) -> Self {
        self.inputs.insert(name.to_string(), path.into());
        self
    }

    fn check_keys(&self) -> Result<()> {
        let allowed = self.recipe.params();
        if let Some(k) = self.params.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "recipe {} has no parameter '{k}' (known: {})",
                self.recipe,
                allowed.join(", ")
            )));
        }
        let names = self.recipe.inputs();
        if let Some(k) = self.inputs.keys().find(|k| !names.contains(&k.as_str())) {
            return Err(Error::Config(format!(
                "recipe {} takes no input '{k}' (known: {})",
                self.recipe,
                names.join(", ")
            )));
        }
        Ok(())
    }

    /// Known keys only, and every input present on disk.
    pub fn validate(&self) -> Result<()> {
        self.check_keys()?;
        for (name, path) in &self.inputs {
            if !path.is_file() {
                return Err(Error::Config(format!("input '{name}' not found: {}", path.display())));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub name: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: StageStatus,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub build: String,
    pub recipe: Recipe,
    pub seed: u64,
    /// `synthetic` or `real`.
    pub mode: String,
    /// Every parameter the run read, defaults included.
    pub params: BTreeMap<String, serde_json::Value>,
    pub inputs: Vec<InputRecord>,
    pub stages: Vec<StageRecord>,
    pub files: Vec<FileRecord>,
}

impl Manifest {
    pub fn n_failed(&self) -> usize {
        self.stages.iter().filter(|s| s.status == StageStatus::Failed).count()
    }
}

/// A finished run held in memory.
#[derive(Clone, Debug, PartialEq)]
pub struct Bundle {
    pub manifest: Manifest,
    /// Relative path → contents.
    pub files: BTreeMap<String, Vec<u8>>,
}

impl Bundle {
    pub fn manifest_json(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(&self.manifest)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn file(&self, path: &str) -> Option<&[u8]> {
        self.files.get(path).map(Vec::as_slice)
    }

    /// Writes the bundle under `dir`, manifest last.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("manifest.json");
        fs::write(&path, self.manifest_json()?).map_err(|e| Error::io(&path, e))
    }
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// State threaded through a recipe.
pub(crate) struct Ctx {
    pub params: Params,
    pub seed: Seed,
    inputs: BTreeMap<String, PathBuf>,
    files: BTreeMap<String, Vec<u8>>,
    stages: Vec<StageRecord>,
}

impl Ctx {
    pub fn input(&self, name: &str) -> Option<&Path> {
        self.inputs.get(name).map(PathBuf::as_path)
    }

    pub fn is_real(&self) -> bool {
        !self.inputs.is_empty()
    }

    pub fn report<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_vec_pretty(value)?;
        v.push(b'\n');
        self.files.insert(format!("reports/{name}.json"), v);
        Ok(())
    }

    pub fn table(&mut self, name: &str, csv: String) {
        self.files.insert(format!("tables/{name}.csv"), csv.into_bytes());
    }

    /// Runs `f`, recording its outcome. Failures are kept in the manifest and
    /// do not stop the recipe.
    pub fn stage<T>(&mut self, name: &str, f: impl FnOnce(&mut Ctx) -> Result<T>) -> Option<T> {
        let out = f(self);
        let (status, error, value) = match out {
            Ok(v) => (StageStatus::Ok, None, Some(v)),
            Err(e) => {
                log::warn!("stage {name} failed: {e}");
                (StageStatus::Failed, Some(e.to_string()), None)
            }
        };
        self.stages.push(StageRecord {
            name: name.to_string(),
            status,
            error,
        });
        value
    }
}

/// Runs `spec` in memory. Errors are fatal (bad spec or unreadable inputs);
/// stage failures are reported in the manifest instead.
pub fn run(spec: &ExperimentSpec) -> Result<Bundle> {
    spec.validate()?;
    let mut inputs = Vec::new();
    for (name, path) in &spec.inputs {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        inputs.push(InputRecord {
            name: name.clone(),
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        });
    }
    let mut ctx = Ctx {
        params: Params::new(spec.params.clone(), spec.recipe.params()),
        seed: Seed::new(spec.seed),
        inputs: spec.inputs.clone(),
        files: BTreeMap::new(),
        stages: Vec::new(),
    };
    log::info!("running recipe {} (seed {})", spec.recipe, spec.seed);
    recipes::run(spec.recipe, &mut ctx)?;
    let files: Vec<FileRecord> = ctx
        .files
        .iter()
        .map(|(path, bytes)| FileRecord {
            path: path.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        })
        .collect();
    let manifest = Manifest {
        build: BUILD_ID.to_string(),
        recipe: spec.recipe,
        seed: spec.seed,
        mode: if ctx.is_real() { "real" } else { "synthetic" }.to_string(),
        params: ctx.params.resolved().clone(),
        inputs,
        stages: ctx.stages,
        files,
    };
    Ok(Bundle {
        manifest,
        files: ctx.files,
    })
}
