use rand::Rng;

use crate::data::{standardize, AnnualSeries, ProxyMatrix, SeriesKind, SeriesMeta, YearRange};
use crate::error::{Error, Result};
use crate::pseudoproxy::{gen_ar_target, gen_noise_matrix, Ar1Params, NoiseSpec};
use crate::rng::Seed;

/// AR target over `years`, standardized over `calibration`.
pub fn synthetic_target(phi: &[f64], years: YearRange, calibration: &YearRange, seed: Seed) -> Result<AnnualSeries> {
    standardize(&gen_ar_target(phi, 1.0, years, seed)?, calibration)
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Columns `r_j * target + sqrt(1 - r_j^2) * z_j`, `z_j` unit-variance AR1
/// with coefficient uniform on `phi`, `r_j` uniform on `signal`, latitude
/// uniform on 5-75N.
pub fn signal_columns(
    target: &AnnualSeries,
    n: usize,
    signal: (f64, f64),
    phi: (f64, f64),
    kind: SeriesKind,
    prefix: &str,
    seed: Seed,
) -> Result<ProxyMatrix> {
    if target.has_missing() {
        return Err(Error::Coverage("synthetic columns need a fully observed target".into()));
    }
    for (name, (lo, hi)) in [("signal", signal), ("noise_phi", phi)] {
        if !(lo <= hi) {
            return Err(Error::Parameter(format!("{name} range [{lo}, {hi}] is empty")));
        }
    }
    if !(0.0..=1.0).contains(&signal.0) || !(0.0..=1.0).contains(&signal.1) {
        return Err(Error::Parameter(format!("signal range {signal:?} outside [0, 1]")));
    }
    let mut rng = seed.derive(0).rng();
    let mut params = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    let mut lats = Vec::with_capacity(n);
    for _ in 0..n {
        let f = uniform(&mut rng, phi);
        params.push(Ar1Params::new(f, (1.0 - f * f).max(0.0).sqrt(), 0.0)?);
        r.push(uniform(&mut rng, signal));
        lats.push(uniform(&mut rng, (5.0, 75.0)));
    }
    let noise = gen_noise_matrix(&NoiseSpec::Ar1Empirical { params }, target.range(), n, seed.derive(1))?;
    let y = target.raw_values();
    let series: Vec<AnnualSeries> = (0..n)
        .map(|j| {
            let z = noise.column(j);
            let w = (1.0 - r[j] * r[j]).sqrt();
            let v: Vec<f64> = y.iter().zip(z.raw_values()).map(|(a, b)| r[j] * a + w * b).collect();
            AnnualSeries::new(target.start_year(), v)
        })
        .collect::<Result<_>>()?;
    let metas = (0..n)
        .map(|j| {
            SeriesMeta::new(format!("{prefix}{:04}", j + 1), kind, target.start_year())
                .with_location(lats[j], 0.0)
                .with_note(format!("signal={}", r[j]))
        })
        .collect();
    ProxyMatrix::from_series(metas, &series)
}
