use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::data::{ProxyMatrix, YearRange};
use crate::error::{Error, Result};
use crate::pseudoproxy::NoiseSpec;
use crate::solvers::{LambdaGrid, WeightMode};
use crate::validation::{empirical_ar1_null, LambdaRule, MethodConfig};

/// Recipe parameters with typed, defaulted lookups. Every value read is
/// remembered so the manifest can list the parameters actually in force.
#[derive(Clone, Debug)]
pub struct Params {
    table: toml::Table,
    allowed: &'static [&'static str],
    resolved: BTreeMap<String, serde_json::Value>,
}

impl Params {
    pub fn new(table: toml::Table, allowed: &'static [&'static str]) -> Self {
        Params {
            table,
            allowed,
            resolved: BTreeMap::new(),
        }
    }

    fn lookup<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>> {
        debug_assert!(self.allowed.contains(&key), "undeclared parameter {key}");
        match self.table.get(key) {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| Error::Config(format!("parameter '{key}': {e}"))),
        }
    }

    fn record<T: Serialize>(&mut self, key: &str, v: &T) -> Result<()> {
        self.resolved.insert(key.to_string(), serde_json::to_value(v)?);
        Ok(())
    }

    pub fn get<T: DeserializeOwned + Serialize>(&mut self, key: &str, default: T) -> Result<T> {
        let v = self.lookup(key)?.unwrap_or(default);
        self.record(key, &v)?;
        Ok(v)
    }

    /// A parameter with no default.
    pub fn opt<T: DeserializeOwned + Serialize>(&mut self, key: &str) -> Result<Option<T>> {
        let v: Option<T> = self.lookup(key)?;
        if let Some(v) = &v {
            self.record(key, v)?;
        }
        Ok(v)
    }

    /// `[start, end]`.
    pub fn range(&mut self, key: &str, default: (i32, i32)) -> Result<YearRange> {
        let v: Vec<i32> = self.get(key, vec![default.0, default.1])?;
        match v.as_slice() {
            [a, b] => YearRange::new(*a, *b),
            _ => Err(Error::Config(format!("parameter '{key}' must be [start, end]"))),
        }
    }

    pub fn resolved(&self) -> &BTreeMap<String, serde_json::Value> {
        &self.resolved
    }
}

/// TOML value from command-line text; anything that is not valid TOML is
/// taken as a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.parse()
        .map_err(|_| Error::Config(format!("bad {what} '{s}' in method spec")))
}

/// Method from its short name:
/// `cps`, `cps_abs_corr`, `composite`, `ols`, `intercept`, `lasso` (CV λ),
/// `lasso_tingley`, `lasso_fixed:<λ>`, `noncentral_lasso`,
/// `noncentral_lasso_tingley`, `enet:<α>`, `pc_ols:<k>`, `arma:<p>:<q>`.
/// Cross-validated rules use `folds × repetitions`.
pub fn parse_method(s: &str, folds: usize, repetitions: usize) -> Result<MethodConfig> {
    let cv = LambdaRule::Cv {
        folds,
        repetitions,
        grid: LambdaGrid::default(),
    };
    let parts: Vec<&str> = s.trim().split(':').collect();
    let m = match parts.as_slice() {
        ["cps"] => MethodConfig::Cps {
            weight_mode: WeightMode::LatitudeCosine,
        },
        ["cps_abs_corr"] => MethodConfig::Cps {
            weight_mode: WeightMode::AbsCorrelation,
        },
        ["composite"] | ["composite_regression"] => MethodConfig::CompositeRegression,
        ["ols"] => MethodConfig::Ols,
        ["intercept"] => MethodConfig::Intercept,
        ["lasso"] | ["lasso_cv"] => MethodConfig::Lasso { lambda: cv },
        ["lasso_tingley"] => MethodConfig::Lasso {
            lambda: LambdaRule::tingley(),
        },
        ["lasso_fixed", v] => MethodConfig::Lasso {
            lambda: LambdaRule::Fixed { value: num(v, "lambda")? },
        },
        ["noncentral_lasso"] => MethodConfig::NoncentralLasso { lambda: cv },
        ["noncentral_lasso_tingley"] => MethodConfig::NoncentralLasso {
            lambda: LambdaRule::tingley(),
        },
        ["enet", a] => MethodConfig::ElasticNet {
            lambda: cv,
            alpha: num(a, "alpha")?,
        },
        ["pc_ols", k] => MethodConfig::PcOls {
            k: num(k, "k")?,
            groups: None,
        },
        ["arma", p, q] => MethodConfig::Arma {
            p: num(p, "p")?,
            q: num(q, "q")?,
        },
        _ => return Err(Error::Config(format!("unknown method '{s}'"))),
    };
    Ok(m)
}

/// Null family from its label: `white`, `ar1(<φ>)`, `ar1_empirical`
/// (coefficients fitted to `proxies` over `window`) or `brownian`.
pub fn parse_null(label: &str, proxies: &ProxyMatrix, window: &YearRange) -> Result<NoiseSpec> {
    let l = label.trim();
    match l {
        "white" => Ok(NoiseSpec::White),
        "ar1_empirical" => empirical_ar1_null(proxies, window),
        "brownian" => Ok(NoiseSpec::Brownian { standardize_over: None }),
        _ => {
            let phi = l
                .strip_prefix("ar1(")
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| Error::Config(format!("unknown null '{label}'")))?;
            NoiseSpec::ar1(num(phi, "AR1 coefficient")?)
        }
    }
}
