//! Bayesian AR+PC regression: blocked Gibbs sampling, backcast path
//! simulation and the split of predictive uncertainty into parameter and
//! innovation parts.

mod paths;
mod sampler;

pub use paths::{
    backcast_paths, bands_csv, decompose_uncertainty, ensemble_csv, simulate_paths, smooth_paths, Band,
    Decomposition, PathMode, PosteriorEnsemble, UncertaintyBands,
};
pub use sampler::{fit_bayes, split_rhat, BayesPosterior, ParamDraw, RhatEntry};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Seed;

/// Which neighbours the AR terms regress on.
///
/// `Backward` fits `y_t` on `y_{t+1}, y_{t+2}`, the direction the backcast
/// recursion runs in, so the fitted and simulated models coincide exactly.
/// `Forward` fits `y_t` on `y_{t-1}, y_{t-2}` and reuses the coefficients
/// in reversed time, which is exact only for a reversible process.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArDirection {
    #[default]
    Backward,
    Forward,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    /// Normal(0, scale²) on every standardized-scale coefficient, intercept included.
    pub coef_scale: f64,
    /// Inverse-Gamma(shape, scale) on the standardized innovation variance.
    pub var_shape: f64,
    pub var_scale: f64,
}

impl Default for Prior {
    fn default() -> Self {
        Prior {
            coef_scale: 10.0,
            var_shape: 0.01,
            var_scale: 0.01,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: Seed,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 5000,
            burn_in: 2500,
            thin: 1,
            chains: 4,
            seed: Seed::new(0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesSpec {
    /// 0 or 2.
    pub ar_order: usize,
    /// Number of leading PC score columns used.
    pub k: usize,
    #[serde(default)]
    pub direction: ArDirection,
    #[serde(default)]
    pub prior: Prior,
    #[serde(default)]
    pub mcmc: McmcConfig,
}

impl BayesSpec {
    pub fn new(ar_order: usize, k: usize, seed: Seed) -> Self {
        BayesSpec {
            ar_order,
            k,
            direction: ArDirection::default(),
            prior: Prior::default(),
            mcmc: McmcConfig { seed, ..McmcConfig::default() },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ar_order != 0 && self.ar_order != 2 {
            return Err(Error::Config(format!("ar_order must be 0 or 2, got {}", self.ar_order)));
        }
        let m = &self.mcmc;
        if m.iterations <= m.burn_in {
            return Err(Error::Config("iterations must exceed burn_in".into()));
        }
        if m.chains < 2 {
            return Err(Error::Config("at least two chains are needed".into()));
        }
        if m.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        let p = &self.prior;
        if !(p.coef_scale > 0.0 && p.var_shape > 0.0 && p.var_scale > 0.0) {
            return Err(Error::Config("prior scales must be positive".into()));
        }
        Ok(())
    }

    /// Kept draws per chain.
    pub fn draws_per_chain(&self) -> usize {
        (self.mcmc.iterations - self.mcmc.burn_in).div_ceil(self.mcmc.thin)
    }
}

#[cfg(test)]
mod tests;
