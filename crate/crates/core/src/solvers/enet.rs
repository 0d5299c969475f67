//! Elastic net by cyclic coordinate descent.
//!
//! Objective on the internally scaled predictors x̃ (unit mean square):
//!
//! ```text
//! (1/2n)‖y − b0 − X̃β‖² + λ(α‖β‖₁ + (1−α)/2 ‖β‖²)
//! ```
//!
//! with `b0` unpenalized. In the default centred form predictors are
//! standardized (population sd) and `b0 = ȳ`; in the non-centred form columns
//! are only divided by their root mean square and `b0` is an explicit free
//! coordinate.

use serde::{Deserialize, Serialize};

use super::linear::{empty_model, FitDiagnostics, LinearMethod, LinearModel, Penalty};
use super::training::TrainingSet;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnetOptions {
    pub alpha: f64,
    /// `false` selects the non-centred intercept-column form.
    pub centered: bool,
    /// A sweep has converged when every `c_j·Δβ_j²` (the objective change it
    /// implies) is below `tol · var(y)`.
    pub tol: f64,
    pub max_sweeps: usize,
    /// When set, a converged fit whose KKT violation exceeds
    /// `kkt_tol · max(λα, 1e-3·sd(y))` is polished with a stricter `tol`.
    #[serde(default)]
    pub kkt_tol: Option<f64>,
}

impl Default for EnetOptions {
    fn default() -> Self {
        EnetOptions {
            alpha: 1.0,
            centered: true,
            tol: 1e-14,
            max_sweeps: 10_000,
            kkt_tol: Some(1e-9),
        }
    }
}

impl EnetOptions {
    pub fn lasso() -> Self {
        Self::default()
    }

    pub fn noncentral_lasso() -> Self {
        EnetOptions {
            centered: false,
            ..Self::default()
        }
    }

    pub fn elastic_net(alpha: f64) -> Self {
        EnetOptions {
            alpha,
            ..Self::default()
        }
    }

    /// Same problem without the KKT polish and with the usual `1e-7` stopping
    /// threshold; for cross-validation paths where only predictions matter.
    pub fn for_paths(&self) -> Self {
        EnetOptions {
            kkt_tol: None,
            tol: self.tol.max(1e-7),
            ..*self
        }
    }

    fn method(&self) -> LinearMethod {
        match (self.centered, self.alpha == 1.0) {
            (false, _) => LinearMethod::NoncentralLasso,
            (true, true) => LinearMethod::Lasso,
            (true, false) => LinearMethod::ElasticNet,
        }
    }
}

/// Scaled problem: columns of `ts.x` with nonzero scale, stored column-wise.
struct Scaled {
    cols: Vec<Vec<f64>>,
    /// Index into the training-set columns for each scaled column.
    keep: Vec<usize>,
    means: Vec<f64>,
    scales: Vec<f64>,
    /// Response, centred when the problem is centred.
    y: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
    centered: bool,
    n: f64,
}

impl Scaled {
    fn new(ts: &TrainingSet, centered: bool) -> Result<Scaled> {
        let n = ts.n_obs();
        if n < 2 {
            return Err(Error::InsufficientData(format!("{n} training rows")));
        }
        if ts.x.iter().chain(ts.y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value in design or response".into()));
        }
        let nf = n as f64;
        let y_mean = ts.y.mean();
        let y_var = ts.y.iter().map(|v| (v - y_mean).powi(2)).sum::<f64>() / nf;
        let mut cols = Vec::new();
        let mut keep = Vec::new();
        let mut means = Vec::new();
        let mut scales = Vec::new();
        for k in 0..ts.n_features() {
            let col = ts.x.column(k);
            let m = if centered { col.mean() } else { 0.0 };
            let s = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf).sqrt();
            if s > 0.0 && (centered || col.iter().any(|&v| v != col[0])) {
                cols.push(col.iter().map(|v| (v - m) / s).collect());
                keep.push(k);
                means.push(m);
                scales.push(s);
            }
        }
        let y = if centered {
            ts.y.iter().map(|v| v - y_mean).collect()
        } else {
            ts.y.iter().copied().collect()
        };
        Ok(Scaled {
            cols,
            keep,
            means,
            scales,
            y,
            y_mean,
            y_scale: y_var.sqrt().max(f64::MIN_POSITIVE),
            centered,
            n: nf,
        })
    }

    fn grad(&self, j: usize, r: &[f64]) -> f64 {
        dot(&self.cols[j], r) / self.n
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

const WARM_STEP: f64 = 0.7;

/// Smallest λ (for the Lasso) at which every coefficient is zero.
pub fn lambda_max(ts: &TrainingSet) -> Result<f64> {
    lambda_max_with(ts, &EnetOptions::lasso())
}

pub fn lambda_max_with(ts: &TrainingSet, opts: &EnetOptions) -> Result<f64> {
    let sc = Scaled::new(ts, opts.centered)?;
    if ts.y.iter().all(|&v| v == ts.y[0]) {
        return Err(Error::DegenerateSeries("response is constant".into()));
    }
    let r = residual_at_zero(&sc);
    let g = (0..sc.cols.len()).map(|j| sc.grad(j, &r).abs()).fold(0.0, f64::max);
    Ok(if opts.alpha > 0.0 { g / opts.alpha } else { f64::INFINITY })
}

/// The fixed-fraction rule: 0.05 × λ_max.
pub fn tingley_lambda(ts: &TrainingSet) -> Result<f64> {
    Ok(0.05 * lambda_max(ts)?)
}

fn residual_at_zero(sc: &Scaled) -> Vec<f64> {
    if sc.centered {
        sc.y.clone()
    } else {
        sc.y.iter().map(|v| v - sc.y_mean).collect()
    }
}

struct State {
    beta: Vec<f64>,
    b0: f64,
    r: Vec<f64>,
}

impl State {
    fn zero(sc: &Scaled) -> State {
        State {
            beta: vec![0.0; sc.cols.len()],
            b0: if sc.centered { 0.0 } else { sc.y_mean },
            r: residual_at_zero(sc),
        }
    }
}

/// One pass over `set`; returns the largest `c_j·Δβ_j²`.
fn sweep(sc: &Scaled, st: &mut State, set: &[usize], l1: f64, l2: f64) -> f64 {
    let mut max_change: f64 = 0.0;
    if !sc.centered {
        let d = st.r.iter().sum::<f64>() / sc.n;
        if d != 0.0 {
            st.b0 += d;
            st.r.iter_mut().for_each(|v| *v -= d);
            max_change = d * d;
        }
    }
    for &j in set {
        let x = &sc.cols[j];
        let c = dot(x, x) / sc.n;
        let old = st.beta[j];
        let z = sc.grad(j, &st.r) + c * old;
        let new = soft(z, l1) / (c + l2);
        let d = new - old;
        if d != 0.0 {
            st.beta[j] = new;
            st.r.iter_mut().zip(x).for_each(|(r, xv)| *r -= d * xv);
            max_change = max_change.max(c * d * d);
        }
    }
    max_change
}

fn kkt_violation(sc: &Scaled, st: &State, l1: f64, l2: f64) -> f64 {
    let mut v: f64 = 0.0;
    if !sc.centered {
        v = (st.r.iter().sum::<f64>() / sc.n).abs();
    }
    for (j, &b) in st.beta.iter().enumerate() {
        let g = sc.grad(j, &st.r);
        let e = if b != 0.0 {
            (g - l2 * b - l1 * b.signum()).abs()
        } else {
            (g.abs() - l1).max(0.0)
        };
        v = v.max(e);
    }
    v
}

/// Active-set coordinate descent: full sweeps alternate with sweeps over the
/// current nonzero set until a full sweep changes nothing beyond `tol`.
fn solve(sc: &Scaled, st: &mut State, l1: f64, l2: f64, opts: &EnetOptions) -> FitDiagnostics {
    let all: Vec<usize> = (0..sc.cols.len()).collect();
    let mut sweeps = 0;
    let var = sc.y_scale * sc.y_scale;
    let mut tol = opts.tol * var;
    loop {
        let mut converged = false;
        while sweeps < opts.max_sweeps {
            sweeps += 1;
            let full = sweep(sc, st, &all, l1, l2);
            if full < tol {
                converged = true;
                break;
            }
            let active: Vec<usize> = all.iter().copied().filter(|&j| st.beta[j] != 0.0).collect();
            while sweeps < opts.max_sweeps {
                sweeps += 1;
                if sweep(sc, st, &active, l1, l2) < tol {
                    break;
                }
            }
        }
        let kkt = kkt_violation(sc, st, l1, l2);
        // a stricter pass when the stopping rule fired before the optimality
        // conditions were met to the reporting precision
        if let Some(k) = opts.kkt_tol {
            if converged && kkt > k * l1.max(sc.y_scale * 1e-3) && sweeps < opts.max_sweeps && tol > 1e-28 * var {
                tol *= 1e-2;
                continue;
            }
        }
        if !converged {
            log::debug!("coordinate descent stopped at {sweeps} sweeps without converging");
        }
        return FitDiagnostics {
            sweeps,
            converged,
            kkt_violation: kkt,
        };
    }
}

fn to_model(ts: &TrainingSet, sc: &Scaled, st: &State, lambda: f64, opts: &EnetOptions, diag: FitDiagnostics) -> LinearModel {
    let mut m = empty_model(ts, opts.method());
    let mut b0 = if sc.centered { sc.y_mean } else { st.b0 };
    for (k, &col) in sc.keep.iter().enumerate() {
        let j = ts.columns[col];
        let coef = st.beta[k] / sc.scales[k];
        m.coefficients[j] = coef;
        m.standardized_coefficients[j] = st.beta[k];
        m.column_means[j] = sc.means[k];
        m.column_sds[j] = sc.scales[k];
        b0 -= coef * sc.means[k];
    }
    m.intercept = b0;
    m.penalty = Some(Penalty {
        lambda,
        alpha: opts.alpha,
    });
    m.diagnostics = Some(diag);
    if !opts.centered {
        m.notes
            .push("noncentral: unpenalized intercept column, predictors scaled but not centred (interpretation)".into());
    }
    m
}

fn check(lambda: f64, opts: &EnetOptions) -> Result<()> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Parameter(format!("penalty {lambda} must be a finite nonnegative number")));
    }
    if !(0.0..=1.0).contains(&opts.alpha) {
        return Err(Error::Parameter(format!("mixing parameter {} outside [0, 1]", opts.alpha)));
    }
    Ok(())
}

pub fn fit_lasso(ts: &TrainingSet, lambda: f64) -> Result<LinearModel> {
    fit_elastic_net_with(ts, lambda, &EnetOptions::lasso())
}

pub fn fit_elastic_net(ts: &TrainingSet, lambda: f64, alpha: f64) -> Result<LinearModel> {
    fit_elastic_net_with(ts, lambda, &EnetOptions::elastic_net(alpha))
}

pub fn fit_elastic_net_with(ts: &TrainingSet, lambda: f64, opts: &EnetOptions) -> Result<LinearModel> {
    check(lambda, opts)?;
    let sc = Scaled::new(ts, opts.centered)?;
    let mut st = State::zero(&sc);
    // small penalties converge far faster from a warm start walked down from
    // the null fit than from zero
    if opts.alpha > 0.0 {
        let top = kkt_violation(&sc, &st, 0.0, 0.0) / opts.alpha;
        let loose = opts.for_paths();
        let mut l = top * WARM_STEP;
        while l > lambda && l > top * 1e-4 {
            solve(&sc, &mut st, l * opts.alpha, l * (1.0 - opts.alpha), &loose);
            l *= WARM_STEP;
        }
    }
    let (l1, l2) = (lambda * opts.alpha, lambda * (1.0 - opts.alpha));
    let diag = solve(&sc, &mut st, l1, l2, opts);
    Ok(to_model(ts, &sc, &st, lambda, opts, diag))
}

/// Fits along `lambdas` (any order; solved in decreasing order with warm
/// starts) and returns the models in the order given.
pub fn enet_path(ts: &TrainingSet, lambdas: &[f64], opts: &EnetOptions) -> Result<Vec<LinearModel>> {
    for &l in lambdas {
        check(l, opts)?;
    }
    let sc = Scaled::new(ts, opts.centered)?;
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&a, &b| lambdas[b].total_cmp(&lambdas[a]));
    let mut st = State::zero(&sc);
    let mut out: Vec<Option<LinearModel>> = vec![None; lambdas.len()];
    for i in order {
        let l = lambdas[i];
        let diag = solve(&sc, &mut st, l * opts.alpha, l * (1.0 - opts.alpha), opts);
        out[i] = Some(to_model(ts, &sc, &st, l, opts, diag));
    }
    Ok(out.into_iter().flatten().collect())
}
