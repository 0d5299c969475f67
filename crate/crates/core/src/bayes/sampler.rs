use log::warn;
use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use rand_distr::Gamma;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ArDirection, BayesSpec};
use crate::data::{AnnualSeries, YearRange};
use crate::error::{Error, Result};
use crate::pseudoproxy::normal;
use crate::solvers::ScoreMatrix;
use crate::stats;

/// One posterior draw on the original data scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamDraw {
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub beta: Vec<f64>,
    pub sigma: f64,
}

impl ParamDraw {
    /// `[intercept, ar.., beta.., sigma]`.
    pub fn flat(&self) -> Vec<f64> {
        let mut v = vec![self.intercept];
        v.extend(&self.ar);
        v.extend(&self.beta);
        v.push(self.sigma);
        v
    }

    fn from_flat(v: &[f64], p: usize, k: usize) -> Self {
        ParamDraw {
            intercept: v[0],
            ar: v[1..1 + p].to_vec(),
            beta: v[1 + p..1 + p + k].to_vec(),
            sigma: v[1 + p + k],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhatEntry {
    pub parameter: String,
    pub rhat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesPosterior {
    pub spec: BayesSpec,
    pub calibration: YearRange,
    /// Chain-major: all of chain 0, then chain 1, ...
    pub draws: Vec<ParamDraw>,
    pub chains: usize,
    pub rhat: Vec<RhatEntry>,
    pub converged: bool,
    /// Observed values at the start of the calibration period that seed the
    /// backcast recursion (`ar_order` of them, earliest first).
    pub anchor: Vec<f64>,
    pub n_obs: usize,
}

impl BayesPosterior {
    pub fn parameter_names(&self) -> Vec<String> {
        parameter_names(self.spec.ar_order, self.spec.k)
    }

    pub fn posterior_mean(&self) -> ParamDraw {
        let flats: Vec<Vec<f64>> = self.draws.iter().map(ParamDraw::flat).collect();
        let d = flats[0].len();
        let m: Vec<f64> = (0..d)
            .map(|j| flats.iter().map(|f| f[j]).sum::<f64>() / flats.len() as f64)
            .collect();
        ParamDraw::from_flat(&m, self.spec.ar_order, self.spec.k)
    }

    /// Equal-tailed interval per parameter, in `parameter_names` order.
    pub fn intervals(&self, level: f64) -> Vec<(f64, f64)> {
        let flats: Vec<Vec<f64>> = self.draws.iter().map(ParamDraw::flat).collect();
        let lo = (1.0 - level) / 2.0;
        (0..flats[0].len())
            .map(|j| {
                let mut col: Vec<f64> = flats.iter().map(|f| f[j]).collect();
                col.sort_by(f64::total_cmp);
                (stats::quantile_sorted(&col, lo), stats::quantile_sorted(&col, 1.0 - lo))
            })
            .collect()
    }
}

fn parameter_names(p: usize, k: usize) -> Vec<String> {
    let mut v = vec!["intercept".to_string()];
    v.extend((1..=p).map(|i| format!("phi{i}")));
    v.extend((1..=k).map(|i| format!("beta{i}")));
    v.push("sigma".into());
    v
}

/// Split-chain potential scale reduction. `chains[c]` holds one parameter's
/// kept draws for chain `c`.
pub fn split_rhat(chains: &[Vec<f64>]) -> f64 {
    let half = chains.iter().map(Vec::len).min().unwrap_or(0) / 2;
    if half < 2 {
        return f64::NAN;
    }
    let parts: Vec<&[f64]> = chains
        .iter()
        .flat_map(|c| [&c[..half], &c[half..2 * half]])
        .collect();
    let n = half as f64;
    let means: Vec<f64> = parts.iter().map(|p| stats::mean(p)).collect();
    let w = parts.iter().map(|p| stats::sample_variance(p)).sum::<f64>() / parts.len() as f64;
    let b = n * stats::sample_variance(&means);
    if w <= 0.0 {
        return if b <= 0.0 { 1.0 } else { f64::INFINITY };
    }
    (((n - 1.0) / n * w + b / n) / w).sqrt()
}

/// Blocked conjugate Gibbs sampler for
/// `y_t = α + Σ φ_i y_{t∓i} + β·PC_t + ε_t`, run on standardized `y` and PC
/// scores and mapped back to the data scale.
///
/// `y` must be fully observed over `calibration`; the first `k` score columns
/// of `pcs` are used.
pub fn fit_bayes(
    y: &AnnualSeries,
    pcs: Option<&ScoreMatrix>,
    calibration: &YearRange,
    spec: &BayesSpec,
) -> Result<BayesPosterior> {
    spec.validate()?;
    let p = spec.ar_order;
    let k = spec.k;
    let yv: Vec<f64> = calibration
        .years()
        .map(|t| {
            y.get(t)
                .ok_or_else(|| Error::Coverage(format!("target missing in {t} inside the calibration period")))
        })
        .collect::<Result<_>>()?;
    if yv.len() < p + k + 3 {
        return Err(Error::InsufficientData(format!(
            "{} calibration years for {} coefficients",
            yv.len(),
            1 + p + k
        )));
    }
    let m = stats::mean(&yv);
    let s = stats::sample_sd(&yv);
    if s.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::DegenerateSeries("constant calibration target".into()));
    }
    let ys: Vec<f64> = yv.iter().map(|v| (v - m) / s).collect();

    // response rows and their lag offsets
    let rows: Vec<usize> = match spec.direction {
        ArDirection::Backward => (0..yv.len() - p).collect(),
        ArDirection::Forward => (p..yv.len()).collect(),
    };
    let lag = |i: usize, l: usize| match spec.direction {
        ArDirection::Backward => i + l,
        ArDirection::Forward => i - l,
    };
    let mut raw_pc = DMatrix::zeros(rows.len(), k);
    if k > 0 {
        let sc = pcs.ok_or_else(|| Error::Config(format!("k = {k} but no PC scores were supplied")))?;
        if sc.n_components() < k {
            return Err(Error::Config(format!("k = {k} but only {} components", sc.n_components())));
        }
        for (r, &i) in rows.iter().enumerate() {
            let year = calibration.start + i as i32;
            let row = sc
                .row(year)
                .ok_or_else(|| Error::Coverage(format!("PC scores missing in {year}")))?;
            for j in 0..k {
                raw_pc[(r, j)] = row[j];
            }
        }
    }
    let mut pc_mean = vec![0.0; k];
    let mut pc_sd = vec![1.0; k];
    for j in 0..k {
        let col: Vec<f64> = raw_pc.column(j).iter().copied().collect();
        pc_mean[j] = stats::mean(&col);
        pc_sd[j] = stats::sample_sd(&col);
        if pc_sd[j] <= 0.0 {
            return Err(Error::DegenerateSeries(format!("PC {} is constant over the calibration rows", j + 1)));
        }
    }

    let d = 1 + p + k;
    let n = rows.len();
    let mut x = DMatrix::zeros(n, d);
    let mut yr = DVector::zeros(n);
    for (r, &i) in rows.iter().enumerate() {
        yr[r] = ys[i];
        x[(r, 0)] = 1.0;
        for l in 1..=p {
            x[(r, l)] = ys[lag(i, l)];
        }
        for j in 0..k {
            x[(r, 1 + p + j)] = (raw_pc[(r, j)] - pc_mean[j]) / pc_sd[j];
        }
    }
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * &yr;

    let per_chain = spec.draws_per_chain();
    let chains: Vec<Vec<Vec<f64>>> = (0..spec.mcmc.chains as u64)
        .into_par_iter()
        .map(|c| run_chain(&x, &yr, &xtx, &xty, spec, spec.mcmc.seed.derive(c)))
        .collect::<Result<_>>()?;

    // map standardized draws [a, φ.., b.., σ̃] back to the data scale
    let to_data = |v: &[f64]| -> ParamDraw {
        let ar = v[1..1 + p].to_vec();
        let beta: Vec<f64> = (0..k).map(|j| s * v[1 + p + j] / pc_sd[j]).collect();
        let phi_sum: f64 = ar.iter().sum();
        let shift: f64 = (0..k).map(|j| beta[j] * pc_mean[j]).sum();
        ParamDraw {
            intercept: m * (1.0 - phi_sum) + s * v[0] - shift,
            ar,
            beta,
            sigma: s * v[d],
        }
    };
    let draws: Vec<ParamDraw> = chains.iter().flat_map(|c| c.iter().map(|v| to_data(v))).collect();

    let names = parameter_names(p, k);
    let rhat: Vec<RhatEntry> = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let per: Vec<Vec<f64>> = (0..spec.mcmc.chains)
                .map(|c| draws[c * per_chain..(c + 1) * per_chain].iter().map(|dr| dr.flat()[j]).collect())
                .collect();
            RhatEntry {
                parameter: name.clone(),
                rhat: split_rhat(&per),
            }
        })
        .collect();
    let converged = rhat.iter().all(|r| r.rhat < 1.05);
    if !converged {
        let bad: Vec<String> = rhat
            .iter()
            .filter(|r| !(r.rhat < 1.05))
            .map(|r| format!("{}={:.3}", r.parameter, r.rhat))
            .collect();
        warn!("sampler has not converged (split R-hat): {}", bad.join(", "));
    }
    Ok(BayesPosterior {
        spec: *spec,
        calibration: *calibration,
        draws,
        chains: spec.mcmc.chains,
        rhat,
        converged,
        anchor: yv[..p].to_vec(),
        n_obs: n,
    })
}

/// One chain; each kept draw is `[coefficients.., σ̃]` on the standardized scale.
fn run_chain(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    xtx: &DMatrix<f64>,
    xty: &DVector<f64>,
    spec: &BayesSpec,
    seed: crate::rng::Seed,
) -> Result<Vec<Vec<f64>>> {
    let mut rng = seed.rng();
    let d = xtx.nrows();
    let n = y.len() as f64;
    let prior_prec = 1.0 / (spec.prior.coef_scale * spec.prior.coef_scale);
    let shape = spec.prior.var_shape + n / 2.0;
    // overdispersed start so split R-hat means something
    let mut var = (1.5 * normal(&mut rng)).exp();
    let mut out = Vec::with_capacity(spec.draws_per_chain());
    for it in 0..spec.mcmc.iterations {
        // coefficients | variance
        let mut q = xtx / var;
        for i in 0..d {
            q[(i, i)] += prior_prec;
        }
        let chol = Cholesky::new(q).ok_or_else(|| Error::Numeric("posterior precision not positive definite".into()))?;
        let mean = chol.solve(&(xty / var));
        let z = DVector::from_fn(d, |_, _| normal(&mut rng));
        let noise = chol
            .l()
            .transpose()
            .solve_upper_triangular(&z)
            .ok_or_else(|| Error::Numeric("singular Cholesky factor".into()))?;
        let b = mean + noise;
        // variance | coefficients
        let resid = y - x * &b;
        let rate = spec.prior.var_scale + resid.norm_squared() / 2.0;
        let g: f64 = rng.sample(Gamma::new(shape, 1.0 / rate).map_err(|e| Error::Numeric(e.to_string()))?);
        var = 1.0 / g;
        if it >= spec.mcmc.burn_in && (it - spec.mcmc.burn_in).is_multiple_of(spec.mcmc.thin) {
            let mut v: Vec<f64> = b.iter().copied().collect();
            v.push(var.sqrt());
            out.push(v);
        }
    }
    Ok(out)
}
