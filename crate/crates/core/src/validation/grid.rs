use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::nulls::{null_distribution, NullBand, NullSpec};
use super::pipeline::{series_fingerprint, Pipeline};
use super::report::{rmse_profile, RmseReport};
use crate::data::{make_holdout_blocks, AnnualSeries, ModeFilter, ProxyMatrix, YearRange};
use crate::error::{Error, Result};
use crate::rng::Seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSource {
    /// The supplied proxy matrix.
    Proxies,
    Null { spec: NullSpec, n_replications: usize },
}

impl PredictorSource {
    pub fn label(&self) -> String {
        match self {
            PredictorSource::Proxies => "proxy".into(),
            PredictorSource::Null { spec, .. } => spec.label(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridTarget {
    pub label: String,
    pub series: AnnualSeries,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub methods: Vec<Pipeline>,
    pub sources: Vec<PredictorSource>,
    pub block_lengths: Vec<usize>,
    pub modes: Vec<ModeFilter>,
    pub targets: Vec<GridTarget>,
    pub calibration: YearRange,
    pub stride: usize,
    pub band_probabilities: Vec<f64>,
    pub seed: Seed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub method: String,
    pub source: String,
    pub block_length: usize,
    pub mode: ModeFilter,
    pub target: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub key: CellKey,
    /// Content address: method config, data fingerprints and seed.
    pub hash: String,
    pub seed: Seed,
    pub reports: Vec<RmseReport>,
    pub band: Option<NullBand>,
    pub error: Option<String>,
}

impl CellReport {
    pub fn failed(&self) -> bool {
        self.error.is_some() || self.reports.iter().any(|r| r.n_failed() > 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub cells: Vec<CellReport>,
}

impl GridReport {
    pub fn n_failed(&self) -> usize {
        self.cells.iter().filter(|c| c.failed()).count()
    }
}

pub fn matrix_fingerprint(m: &ProxyMatrix) -> String {
    let mut h = Sha256::new();
    h.update(m.start_year().to_le_bytes());
    for c in m.columns() {
        h.update(c.name.as_bytes());
        h.update([0]);
    }
    for (v, miss) in m.raw_values().iter().zip(m.missing_mask()) {
        h.update(if *miss { [1u8] } else { [0u8] });
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

struct Cell<'a> {
    key: CellKey,
    pipeline: &'a Pipeline,
    source: &'a PredictorSource,
    length: usize,
    mode: ModeFilter,
    target: &'a GridTarget,
}

#[derive(Serialize)]
struct CellContent<'a> {
    pipeline: &'a Pipeline,
    source: &'a PredictorSource,
    block_length: usize,
    mode: ModeFilter,
    stride: usize,
    calibration: YearRange,
    target: String,
    proxies: Option<&'a str>,
}

fn sha(bytes: &[u8]) -> [u8; 32] {
    let d = Sha256::digest(bytes);
    let mut out = [0u8; 32];
    out.copy_from_slice(&d);
    out
}

/// Runs the full factorial of methods × sources × block lengths × modes ×
/// targets. Cells run in parallel; each cell's seed is derived from its
/// content, so results do not depend on scheduling or on grid order. With
/// `cache`, finished cells are stored as `<hash>.json` and reused.
pub fn robustness_grid(spec: &GridSpec, proxies: &ProxyMatrix, cache: Option<&Path>) -> Result<GridReport> {
    if spec.methods.is_empty()
        || spec.sources.is_empty()
        || spec.block_lengths.is_empty()
        || spec.modes.is_empty()
        || spec.targets.is_empty()
    {
        return Err(Error::Config("every grid dimension needs at least one entry".into()));
    }
    if let Some(dir) = cache {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let proxy_fp = matrix_fingerprint(proxies);
    let target_fps: Vec<String> = spec.targets.iter().map(|t| series_fingerprint(&t.series)).collect();
    let mut cells = Vec::new();
    for pipeline in &spec.methods {
        for source in &spec.sources {
            for &length in &spec.block_lengths {
                for &mode in &spec.modes {
                    for (ti, target) in spec.targets.iter().enumerate() {
                        cells.push((
                            ti,
                            Cell {
                                key: CellKey {
                                    method: pipeline.method.label(),
                                    source: source.label(),
                                    block_length: length,
                                    mode,
                                    target: target.label.clone(),
                                },
                                pipeline,
                                source,
                                length,
                                mode,
                                target,
                            },
                        ));
                    }
                }
            }
        }
    }
    let out = cells
        .par_iter()
        .map(|(ti, cell)| {
            let content = CellContent {
                pipeline: cell.pipeline,
                source: cell.source,
                block_length: cell.length,
                mode: cell.mode,
                stride: spec.stride,
                calibration: spec.calibration,
                target: target_fps[*ti].clone(),
                proxies: matches!(cell.source, PredictorSource::Proxies).then_some(proxy_fp.as_str()),
            };
            let content_hash = sha(&serde_json::to_vec(&content)?);
            let stream = u64::from_le_bytes(content_hash[..8].try_into().unwrap_or([0; 8]));
            let seed = spec.seed.derive(stream);
            let mut keyed = content_hash.to_vec();
            keyed.extend_from_slice(&seed.master.to_le_bytes());
            keyed.extend_from_slice(&seed.stream.to_le_bytes());
            let hash = hex::encode(sha(&keyed));
            if let Some(dir) = cache {
                if let Ok(text) = fs::read_to_string(dir.join(format!("{hash}.json"))) {
                    if let Ok(done) = serde_json::from_str::<CellReport>(&text) {
                        return Ok(done);
                    }
                }
            }
            let report = run_cell(spec, cell, proxies, hash.clone(), seed);
            if let Some(dir) = cache {
                write_atomic(&dir.join(format!("{hash}.json")), serde_json::to_string_pretty(&report)?.as_bytes())?;
            }
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GridReport { cells: out })
}

fn run_cell(spec: &GridSpec, cell: &Cell<'_>, proxies: &ProxyMatrix, hash: String, seed: Seed) -> CellReport {
    let mut report = CellReport {
        key: cell.key.clone(),
        hash,
        seed,
        reports: Vec::new(),
        band: None,
        error: None,
    };
    let scheme = match make_holdout_blocks(spec.calibration, cell.length, spec.stride, Some(cell.mode)) {
        Ok(s) if !s.is_empty() => s,
        Ok(_) => {
            report.error = Some("holdout scheme has no blocks for this mode".into());
            return report;
        }
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    let target = &cell.target.series;
    match cell.source {
        PredictorSource::Proxies => {
            report
                .reports
                .push(rmse_profile(cell.pipeline, proxies, target, &scheme, "proxy", seed));
        }
        PredictorSource::Null { spec: null, n_replications } => {
            match null_distribution(cell.pipeline, null, target, &scheme, *n_replications, seed) {
                Ok(d) => {
                    report.band = NullBand::from_distribution(&d, &spec.band_probabilities).ok();
                    report.reports = d.replications;
                }
                Err(e) => report.error = Some(e.to_string()),
            }
        }
    }
    report
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Flattened per-block rows for plotting.
pub fn grid_csv(report: &GridReport) -> String {
    let mut s = String::from(
        "method,source,block_length,mode,target,replication,block_start,block_end,block_mode,rmse,error\n",
    );
    for c in &report.cells {
        let mode = serde_json::to_value(c.key.mode)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        let prefix = format!(
            "{},{},{},{},{}",
            c.key.method, c.key.source, c.key.block_length, mode, c.key.target
        );
        if let Some(e) = &c.error {
            let _ = writeln!(s, "{prefix},,,,,,\"{}\"", e.replace('"', "'"));
        }
        for r in &c.reports {
            for b in &r.per_block {
                let _ = writeln!(
                    s,
                    "{prefix},{},{},{},{},{},{}",
                    r.replication_id,
                    b.block.years.start,
                    b.block.years.end,
                    b.block.mode.as_str(),
                    b.rmse.map(|v| v.to_string()).unwrap_or_default(),
                    b.error.as_deref().map(|e| format!("\"{}\"", e.replace('"', "'"))).unwrap_or_default()
                );
            }
        }
    }
    s
}

/// Writes `reports/<hash>.json` per cell and `tables/grid.csv`.
pub fn write_grid(report: &GridReport, dir: &Path) -> Result<()> {
    let reports = dir.join("reports");
    let tables = dir.join("tables");
    fs::create_dir_all(&reports).map_err(|e| Error::io(&reports, e))?;
    fs::create_dir_all(&tables).map_err(|e| Error::io(&tables, e))?;
    for c in &report.cells {
        write_atomic(
            &reports.join(format!("{}.json", c.hash)),
            serde_json::to_string_pretty(c)?.as_bytes(),
        )?;
    }
    let p = tables.join("grid.csv");
    fs::write(&p, grid_csv(report)).map_err(|e| Error::io(&p, e))
}
