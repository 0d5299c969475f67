//! CSV matrix and metadata-sidecar formats.
//!
//! Matrix: header `year,<name>...`, one row per year, empty cell = missing.
//! Sidecar: `name,latitude,longitude,kind,first_year,note`.
//! Numbers are written with 17 significant digits so files round-trip exactly.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::matrix::{ProxyMatrix, SeriesKind, SeriesMeta};
use super::series::AnnualSeries;
use crate::error::{Error, Result};

/// How to attach metadata to the columns of a loaded matrix.
#[derive(Clone, Debug)]
pub struct MatrixSchema {
    pub sidecar: Option<PathBuf>,
    pub default_kind: SeriesKind,
}

impl Default for MatrixSchema {
    fn default() -> Self {
        MatrixSchema {
            sidecar: None,
            default_kind: SeriesKind::Proxy,
        }
    }
}

pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn load_matrix(path: &Path, schema: &MatrixSchema) -> Result<ProxyMatrix> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (names, start, n_years, values, missing) = parse_matrix(text.as_slice())?;
    let metas = match &schema.sidecar {
        Some(side) => {
            let metas = load_sidecar(side)?;
            if metas.len() != names.len() || metas.iter().zip(&names).any(|(m, n)| &m.name != n) {
                return Err(Error::Format(format!(
                    "sidecar {} does not list the matrix columns in order",
                    side.display()
                )));
            }
            metas
        }
        None => {
            let p = names.len();
            names
                .into_iter()
                .enumerate()
                .map(|(j, name)| {
                    let first = (0..n_years)
                        .find(|&i| !missing[i * p + j])
                        .map_or(start, |i| start + i as i32);
                    SeriesMeta::new(name, schema.default_kind, first)
                })
                .collect()
        }
    };
    ProxyMatrix::from_rows(start, metas, n_years, values, missing)
}

type ParsedMatrix = (Vec<String>, i32, usize, Vec<f64>, Vec<bool>);

fn parse_matrix<R: Read>(reader: R) -> Result<ParsedMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Format(format!("unreadable header: {e}")))?
        .clone();
    if header.get(0).map(str::trim) != Some("year") {
        return Err(Error::Format("first header column must be 'year'".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(|s| s.trim().to_string()).collect();
    let p = names.len();

    let mut rows: Vec<(i32, Vec<Option<f64>>)> = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Format(format!("row {row}: {e}")))?;
        let year_cell = rec.get(0).unwrap_or("").trim();
        let year: i32 = year_cell.parse().map_err(|_| Error::Parse {
            row,
            column: 1,
            message: format!("invalid year '{year_cell}'"),
        })?;
        if let Some((prev, _)) = rows.last() {
            if year <= *prev {
                return Err(Error::Format(format!(
                    "row {row}: year {year} does not increase (previous {prev})"
                )));
            }
        }
        let mut vals = Vec::with_capacity(p);
        for c in 0..p {
            let cell = rec.get(c + 1).unwrap_or("").trim();
            if cell.is_empty() {
                vals.push(None);
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: c + 2,
                message: format!("invalid number '{cell}'"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: c + 2,
                    message: format!("non-finite number '{cell}'"),
                });
            }
            vals.push(Some(v));
        }
        rows.push((year, vals));
    }
    let Some(&(start, _)) = rows.first() else {
        return Err(Error::InsufficientData("matrix file has no data rows".into()));
    };
    let end = rows.last().map(|r| r.0).unwrap_or(start);
    let n_years = (end - start + 1) as usize;
    let mut values = vec![0.0; n_years * p];
    let mut missing = vec![true; n_years * p];
    for (year, vals) in rows {
        let i = (year - start) as usize;
        for (j, v) in vals.into_iter().enumerate() {
            if let Some(v) = v {
                values[i * p + j] = v;
                missing[i * p + j] = false;
            }
        }
    }
    Ok((names, start, n_years, values, missing))
}

pub fn write_matrix<W: Write>(m: &ProxyMatrix, mut out: W) -> Result<()> {
    let mut s = String::from("year");
    for c in m.columns() {
        s.push(',');
        s.push_str(&c.name);
    }
    s.push('\n');
    for year in m.range().years() {
        s.push_str(&year.to_string());
        for j in 0..m.n_series() {
            s.push(',');
            if let Some(v) = m.get(year, j) {
                s.push_str(&format_value(v));
            }
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes())
        .map_err(|e| Error::io("<matrix output>", e))
}

pub fn save_matrix(m: &ProxyMatrix, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_matrix(m, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_sidecar<W: Write>(m: &ProxyMatrix, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(["name", "latitude", "longitude", "kind", "first_year", "note"])
        .map_err(io)?;
    for c in m.columns() {
        let lat = c.latitude.map(format_value).unwrap_or_default();
        let lon = c.longitude.map(format_value).unwrap_or_default();
        w.write_record([
            c.name.as_str(),
            &lat,
            &lon,
            c.kind.as_str(),
            &c.first_year.to_string(),
            c.note.as_deref().unwrap_or(""),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io("<sidecar output>", e))
}

pub fn save_sidecar(m: &ProxyMatrix, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_sidecar(m, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_sidecar(path: &Path) -> Result<Vec<SeriesMeta>> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .from_reader(text.as_slice());
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Format(format!("sidecar row {row}: {e}")))?;
        let cell = |c: usize| rec.get(c).unwrap_or("").trim();
        let opt_num = |c: usize| -> Result<Option<f64>> {
            let s = cell(c);
            if s.is_empty() {
                return Ok(None);
            }
            s.parse().map(Some).map_err(|_| Error::Parse {
                row,
                column: c + 1,
                message: format!("invalid number '{s}'"),
            })
        };
        let first_year = cell(4).parse().map_err(|_| Error::Parse {
            row,
            column: 5,
            message: format!("invalid first_year '{}'", cell(4)),
        })?;
        let note = cell(5);
        out.push(SeriesMeta {
            name: cell(0).to_string(),
            latitude: opt_num(1)?,
            longitude: opt_num(2)?,
            kind: cell(3).parse()?,
            first_year,
            note: (!note.is_empty()).then(|| note.to_string()),
        });
    }
    Ok(out)
}

/// Reads a single-series CSV (`year,<name>`), e.g. a temperature target.
pub fn load_series(path: &Path) -> Result<AnnualSeries> {
    let m = load_matrix(path, &MatrixSchema::default())?;
    if m.n_series() != 1 {
        return Err(Error::Format(format!(
            "{} has {} series, expected one",
            path.display(),
            m.n_series()
        )));
    }
    Ok(m.column(0))
}

pub fn write_series<W: Write>(s: &AnnualSeries, name: &str, out: W) -> Result<()> {
    let m = ProxyMatrix::from_series(
        vec![SeriesMeta::new(name, SeriesKind::ExternalPrediction, s.start_year())],
        std::slice::from_ref(s),
    )?;
    write_matrix(&m, out)
}
