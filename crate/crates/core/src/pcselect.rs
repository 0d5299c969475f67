//! Principal-component retention rules on an eigenvalue spectrum.
//!
//! `VarianceThresholdSquaredBug` deliberately reproduces a known error: it
//! applies the cumulative-variance rule to squared eigenvalues, as if they
//! were the variances.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nonincreasing, nonnegative eigenvalues with at least one positive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spectrum(Vec<f64>);

impl Spectrum {
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Parameter("eigenvalues must be finite and nonnegative".into()));
        }
        if !eigenvalues.iter().any(|&v| v > 0.0) {
            return Err(Error::Parameter("spectrum needs a positive eigenvalue".into()));
        }
        if eigenvalues.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Parameter("eigenvalues must be nonincreasing".into()));
        }
        Ok(Spectrum(eigenvalues))
    }

    /// Sorts into nonincreasing order first.
    pub fn sorted(mut eigenvalues: Vec<f64>) -> Result<Self> {
        eigenvalues.sort_by(|a, b| b.total_cmp(a));
        Self::new(eigenvalues)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    VarianceThreshold,
    /// The erroneous rule on squared eigenvalues.
    VarianceThresholdSquaredBug,
    BrokenStick,
    ScreeGap,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::VarianceThreshold,
        Criterion::VarianceThresholdSquaredBug,
        Criterion::BrokenStick,
        Criterion::ScreeGap,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Criterion::VarianceThreshold => "variance_threshold",
            Criterion::VarianceThresholdSquaredBug => "variance_threshold_squared_bug",
            Criterion::BrokenStick => "broken_stick",
            Criterion::ScreeGap => "scree_gap",
        }
    }

    pub fn uses_threshold(&self) -> bool {
        matches!(
            self,
            Criterion::VarianceThreshold | Criterion::VarianceThresholdSquaredBug
        )
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown criterion '{s}'")))
    }
}

/// Smallest K whose cumulative share reaches `threshold`; shares within
/// 1e-12 (relative) of the threshold count as reaching it.
fn cumulative_rule(weights: &[f64], threshold: f64) -> usize {
    let total: f64 = weights.iter().sum();
    let target = threshold * total * (1.0 - 1e-12);
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if acc >= target {
            return k + 1;
        }
    }
    weights.len()
}

/// Expected share of the k-th largest piece of a unit stick broken at p−1
/// uniform points: (1/p) Σ_{i=k}^{p} 1/i.
pub fn broken_stick_expectation(p: usize, k: usize) -> f64 {
    (k..=p).map(|i| 1.0 / i as f64).sum::<f64>() / p as f64
}

pub fn select_k(spectrum: &Spectrum, criterion: Criterion, threshold: f64) -> Result<usize> {
    if criterion.uses_threshold() && !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Parameter(format!("threshold {threshold} outside (0, 1]")));
    }
    let ev = spectrum.values();
    let p = ev.len();
    let k = match criterion {
        Criterion::VarianceThreshold => cumulative_rule(ev, threshold),
        Criterion::VarianceThresholdSquaredBug => {
            let sq: Vec<f64> = ev.iter().map(|v| v * v).collect();
            cumulative_rule(&sq, threshold)
        }
        Criterion::BrokenStick => {
            // leading components whose share beats the stick expectation
            let total: f64 = ev.iter().sum();
            ev.iter()
                .enumerate()
                .take_while(|(i, v)| *v / total > broken_stick_expectation(p, i + 1))
                .count()
        }
        Criterion::ScreeGap => {
            let mut best = (0usize, f64::NEG_INFINITY);
            for k in 0..p.saturating_sub(1) {
                let gap = ev[k] - ev[k + 1];
                if gap > best.1 {
                    best = (k, gap);
                }
            }
            best.0 + 1
        }
    };
    Ok(k.clamp(1, p))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionRow {
    pub criterion: Criterion,
    pub threshold: Option<f64>,
    pub k: usize,
}

/// Every criterion at every threshold (threshold-free criteria once).
pub fn selection_table(spectrum: &Spectrum, thresholds: &[f64]) -> Result<Vec<SelectionRow>> {
    let mut rows = Vec::new();
    for c in Criterion::ALL {
        if c.uses_threshold() {
            for &t in thresholds {
                rows.push(SelectionRow {
                    criterion: c,
                    threshold: Some(t),
                    k: select_k(spectrum, c, t)?,
                });
            }
        } else {
            rows.push(SelectionRow {
                criterion: c,
                threshold: None,
                k: select_k(spectrum, c, 1.0)?,
            });
        }
    }
    Ok(rows)
}

/// CSV with header `criterion,threshold,k`.
pub fn table_csv(rows: &[SelectionRow]) -> String {
    let mut s = String::from("criterion,threshold,k\n");
    for r in rows {
        let t = r.threshold.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{}", r.criterion.as_str(), t, r.k);
    }
    s
}
