//! ARMA(p, q) baseline: conditional sum of squares, then exact Gaussian
//! likelihood through a Kalman filter, and conditional-mean prediction of
//! held-out years from the surrounding observations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linear::finish_prediction;
use super::optim::nelder_mead;
use crate::data::{AnnualSeries, YearRange};
use crate::error::{Error, Result};
use crate::stats;

/// `y_t − μ = Σ φ_i (y_{t−i} − μ) + ε_t + Σ θ_j ε_{t−j}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArmaModel {
    pub p: usize,
    pub q: usize,
    pub ar_coeffs: Vec<f64>,
    pub ma_coeffs: Vec<f64>,
    /// Process mean μ.
    pub intercept: f64,
    pub innovation_sd: f64,
    /// The least-squares start was nonstationary and was shrunk into the
    /// stationary region before likelihood refinement.
    pub projected: bool,
    pub calibration: YearRange,
    pub log_likelihood: f64,
}

/// Partial autocorrelations → AR coefficients (Durbin–Levinson).
pub(crate) fn pacf_to_ar(r: &[f64]) -> Vec<f64> {
    let mut phi: Vec<f64> = Vec::with_capacity(r.len());
    for (k, &rk) in r.iter().enumerate() {
        let prev = phi.clone();
        for j in 0..k {
            phi[j] = prev[j] - rk * prev[k - 1 - j];
        }
        phi.push(rk);
    }
    phi
}

/// AR coefficients → partial autocorrelations; `None` when nonstationary.
pub(crate) fn ar_to_pacf(phi: &[f64]) -> Option<Vec<f64>> {
    let mut a = phi.to_vec();
    let mut r = vec![0.0; phi.len()];
    for k in (0..phi.len()).rev() {
        let rk = a[k];
        if !(rk.abs() < 1.0) {
            return None;
        }
        r[k] = rk;
        let d = 1.0 - rk * rk;
        let prev = a.clone();
        for j in 0..k {
            a[j] = (prev[j] + rk * prev[k - 1 - j]) / d;
        }
        a.truncate(k);
    }
    Some(r)
}

pub fn is_stationary(phi: &[f64]) -> bool {
    ar_to_pacf(phi).is_some()
}

fn is_invertible(theta: &[f64]) -> bool {
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    is_stationary(&neg)
}

/// Shrinks `c_k ↦ c_k·s^k` until `ok` holds.
fn shrink(orig: Vec<f64>, ok: impl Fn(&[f64]) -> bool) -> (Vec<f64>, bool) {
    let mut c = orig.clone();
    let mut s: f64 = 1.0;
    while !ok(&c) {
        s *= 0.95;
        c = orig.iter().enumerate().map(|(k, v)| v * s.powi(k as i32 + 1)).collect();
    }
    let moved = c != orig;
    (c, moved)
}

struct StateSpace {
    t: DMatrix<f64>,
    r: DVector<f64>,
    p0: DMatrix<f64>,
}

fn state_space(phi: &[f64], theta: &[f64]) -> Result<StateSpace> {
    let m = phi.len().max(theta.len() + 1);
    let mut t = DMatrix::zeros(m, m);
    for (i, &f) in phi.iter().enumerate() {
        t[(i, 0)] = f;
    }
    for i in 0..m - 1 {
        t[(i, i + 1)] = 1.0;
    }
    let mut r = DVector::zeros(m);
    r[0] = 1.0;
    for (j, &th) in theta.iter().enumerate() {
        r[j + 1] = th;
    }
    // vec(P) = (I − T⊗T)⁻¹ vec(RRᵀ)
    let rr = &r * r.transpose();
    let a = DMatrix::identity(m * m, m * m) - t.kronecker(&t);
    let b = DVector::from_column_slice(rr.as_slice());
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numeric("stationary covariance equation is singular".into()))?;
    let p0 = DMatrix::from_column_slice(m, m, sol.as_slice());
    Ok(StateSpace { t, r, p0 })
}

/// Concentrated −2 log-likelihood (up to a constant) and σ̂² over the
/// observed values of `y` (gaps are skipped by the filter).
fn kalman(y: &[Option<f64>], mu: f64, phi: &[f64], theta: &[f64]) -> Option<(f64, f64, usize)> {
    let ss = state_space(phi, theta).ok()?;
    let m = ss.t.nrows();
    let rr = &ss.r * ss.r.transpose();
    let mut a = DVector::zeros(m);
    let mut p = ss.p0.clone();
    let (mut sumsq, mut logdet, mut n) = (0.0, 0.0, 0usize);
    for obs in y {
        if let Some(v) = obs {
            let f = p[(0, 0)];
            if !(f > 0.0) {
                return None;
            }
            let e = v - mu - a[0];
            let k = p.column(0) / f;
            a += &k * e;
            p -= &k * p.row(0);
            sumsq += e * e / f;
            logdet += f.ln();
            n += 1;
        }
        a = &ss.t * a;
        p = &ss.t * p * ss.t.transpose() + &rr;
    }
    if n == 0 {
        return None;
    }
    let s2 = sumsq / n as f64;
    Some((n as f64 * s2.ln() + logdet, s2, n))
}

/// Sum of squared one-step residuals, restarting at every gap.
fn css(y: &[Option<f64>], mu: f64, phi: &[f64], theta: &[f64]) -> f64 {
    let (p, q) = (phi.len(), theta.len());
    let mut total = 0.0;
    let mut seg: Vec<f64> = Vec::new();
    let mut flush = |seg: &mut Vec<f64>| {
        let mut e = vec![0.0; seg.len()];
        for t in p..seg.len() {
            let mut v = seg[t] - mu;
            for i in 0..p {
                v -= phi[i] * (seg[t - 1 - i] - mu);
            }
            for j in 0..q.min(t) {
                v -= theta[j] * e[t - 1 - j];
            }
            e[t] = v;
            total += v * v;
        }
        seg.clear();
    };
    for obs in y {
        match obs {
            Some(v) => seg.push(*v),
            None => flush(&mut seg),
        }
    }
    flush(&mut seg);
    total
}

/// Fits ARMA(p, q) to the observed values of `y`; masked years (e.g. a
/// holdout block) are treated as missing.
pub fn fit_arma(y: &AnnualSeries, p: usize, q: usize) -> Result<ArmaModel> {
    let obs = y.observed();
    let k = p + q + 1;
    if obs.len() < k + 2 {
        return Err(Error::InsufficientData(format!(
            "{} observations for an ARMA({p},{q}) fit",
            obs.len()
        )));
    }
    let mean = stats::mean(&obs);
    let sd = stats::sample_sd(&obs);
    if !(sd > 0.0) {
        return Err(Error::DegenerateSeries("constant series".into()));
    }
    let first = y.iter().find(|(_, v)| v.is_some()).map(|(yr, _)| yr).unwrap_or(y.start_year());
    let last = y.iter().filter(|(_, v)| v.is_some()).map(|(yr, _)| yr).last().unwrap_or(first);
    let calibration = YearRange { start: first, end: last };
    let vals: Vec<Option<f64>> = calibration.years().map(|yr| y.get(yr)).collect();

    if p == 0 && q == 0 {
        let ll = kalman(&vals, mean, &[], &[]).map_or(f64::NAN, |(m2, _, _)| -0.5 * m2);
        return Ok(ArmaModel {
            p,
            q,
            ar_coeffs: Vec::new(),
            ma_coeffs: Vec::new(),
            intercept: mean,
            innovation_sd: sd,
            projected: false,
            calibration,
            log_likelihood: ll,
        });
    }

    // conditional sum of squares on raw parameters
    let split = |x: &[f64]| (x[0], x[1..1 + p].to_vec(), x[1 + p..].to_vec());
    let mut x0 = vec![mean];
    x0.extend(std::iter::repeat_n(0.0, p + q));
    let mut step = vec![0.1 * sd];
    step.extend(std::iter::repeat_n(0.1, p + q));
    let c = nelder_mead(
        |x| {
            let (mu, phi, theta) = split(x);
            css(&vals, mu, &phi, &theta)
        },
        &x0,
        &step,
        1e-12,
        20_000,
    );
    let (mu, phi, theta) = split(&c.x);
    let (phi, moved_ar) = shrink(phi, is_stationary);
    let (theta, moved_ma) = shrink(theta, is_invertible);
    let projected = moved_ar || moved_ma;
    if projected {
        log::warn!("ARMA({p},{q}) least-squares start was outside the stationary/invertible region; projected");
    }

    // likelihood refinement in the partial-autocorrelation parametrization
    let clamp_atanh = |r: f64| r.clamp(-0.99, 0.99).atanh();
    let mut u0 = vec![mu];
    u0.extend(ar_to_pacf(&phi).unwrap_or_default().into_iter().map(clamp_atanh));
    let neg: Vec<f64> = theta.iter().map(|t| -t).collect();
    u0.extend(ar_to_pacf(&neg).unwrap_or_default().into_iter().map(clamp_atanh));
    let unpack = |u: &[f64]| -> (f64, Vec<f64>, Vec<f64>) {
        let phi = pacf_to_ar(&u[1..1 + p].iter().map(|v| v.tanh()).collect::<Vec<_>>());
        let theta: Vec<f64> = pacf_to_ar(&u[1 + p..].iter().map(|v| v.tanh()).collect::<Vec<_>>())
            .into_iter()
            .map(|v| -v)
            .collect();
        (u[0], phi, theta)
    };
    let objective = |u: &[f64]| {
        let (mu, phi, theta) = unpack(u);
        kalman(&vals, mu, &phi, &theta).map_or(f64::INFINITY, |r| r.0)
    };
    let mut best = nelder_mead(objective, &u0, &step, 1e-13, 20_000);
    for _ in 0..3 {
        let again = nelder_mead(objective, &best.x, &step, 1e-13, 20_000);
        let done = (best.f - again.f).abs() < 1e-10;
        if again.f <= best.f {
            best = again;
        }
        if done {
            break;
        }
    }
    let (mu, phi, theta) = unpack(&best.x);
    let (m2, s2, _) = kalman(&vals, mu, &phi, &theta)
        .ok_or_else(|| Error::Numeric("ARMA likelihood could not be evaluated".into()))?;
    Ok(ArmaModel {
        p,
        q,
        ar_coeffs: phi,
        ma_coeffs: theta,
        intercept: mu,
        innovation_sd: s2.sqrt(),
        projected,
        calibration,
        log_likelihood: -0.5 * m2,
    })
}

/// Observations further than this from every requested year are not used
/// for conditioning (their correlation with the targets is negligible for
/// any fit with a root safely outside the unit circle).
const CONDITIONING_WINDOW: i32 = 400;

impl ArmaModel {
    /// γ(0..=max_lag).
    pub fn autocovariance(&self, max_lag: usize) -> Result<Vec<f64>> {
        let ss = state_space(&self.ar_coeffs, &self.ma_coeffs)?;
        let s2 = self.innovation_sd * self.innovation_sd;
        let mut m = ss.p0.clone();
        let mut out = Vec::with_capacity(max_lag + 1);
        for _ in 0..=max_lag {
            out.push(s2 * m[(0, 0)]);
            m = &ss.t * m;
        }
        Ok(out)
    }

    /// Gaussian conditional mean of `years` given the observed values of
    /// `history`: both flanks for an interior gap, one side when
    /// extrapolating.
    pub fn predict(&self, history: &AnnualSeries, years: &YearRange) -> Result<AnnualSeries> {
        let lo = years.start - CONDITIONING_WINDOW;
        let hi = years.end + CONDITIONING_WINDOW;
        let cond: Vec<(i32, f64)> = history
            .iter()
            .filter(|(yr, _)| *yr >= lo && *yr <= hi)
            .filter_map(|(yr, v)| v.map(|v| (yr, v)))
            .collect();
        if cond.is_empty() {
            return Err(Error::Coverage(format!("no history observations near {years}")));
        }
        if self.p == 0 && self.q == 0 {
            return finish_prediction(years, years.years().map(|_| Some(self.intercept)).collect());
        }
        let first = cond[0].0.min(years.start);
        let last = cond[cond.len() - 1].0.max(years.end);
        let gamma = self.autocovariance((last - first) as usize)?;
        let g = |a: i32, b: i32| gamma[(a - b).unsigned_abs() as usize];
        let no = cond.len();
        let goo = DMatrix::from_fn(no, no, |i, j| g(cond[i].0, cond[j].0));
        let dev = DVector::from_iterator(no, cond.iter().map(|(_, v)| v - self.intercept));
        let w = goo
            .cholesky()
            .ok_or_else(|| Error::Numeric("conditioning covariance is not positive definite".into()))?
            .solve(&dev);
        let vals = years
            .years()
            .map(|t| Some(self.intercept + cond.iter().zip(w.iter()).map(|((s, _), wi)| g(t, *s) * wi).sum::<f64>()))
            .collect();
        finish_prediction(years, vals)
    }
}
