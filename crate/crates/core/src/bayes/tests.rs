use super::*;
use crate::data::{AnnualSeries, YearRange};
use crate::pseudoproxy::normal;
use crate::solvers::ScoreMatrix;
use nalgebra::DMatrix;

fn cal() -> YearRange {
    YearRange::new(1850, 1998).unwrap()
}

fn quick(ar_order: usize, k: usize, seed: u64) -> BayesSpec {
    let mut s = BayesSpec::new(ar_order, k, Seed::new(seed));
    s.mcmc.iterations = 2000;
    s.mcmc.burn_in = 1000;
    s
}

struct Sim {
    y: AnnualSeries,
    pcs: ScoreMatrix,
}

/// Runs the backward recursion from well past `years.end` down to
/// `years.start` with iid standard normal PC scores.
fn simulate(years: YearRange, alpha: f64, phi: &[f64], beta: &[f64], sigma: f64, seed: Seed) -> Sim {
    let burn = 300;
    let total = years.len() + burn;
    let mut rng = seed.rng();
    let k = beta.len();
    let pcs = DMatrix::from_fn(total, k, |_, _| normal(&mut rng));
    let mut y = vec![0.0; total + phi.len()];
    for t in (0..total).rev() {
        let mut v = alpha + sigma * normal(&mut rng);
        for (l, f) in phi.iter().enumerate() {
            v += f * y[t + 1 + l];
        }
        for j in 0..k {
            v += beta[j] * pcs[(t, j)];
        }
        y[t] = v;
    }
    let n = years.len();
    Sim {
        y: AnnualSeries::new(years.start, y[..n].to_vec()).unwrap(),
        pcs: ScoreMatrix {
            start_year: years.start,
            values: pcs.rows(0, n).into_owned(),
            missing: vec![false; n],
        },
    }
}

#[test]
fn spec_validation() {
    let mut s = quick(1, 0, 0);
    assert!(s.validate().is_err());
    s.ar_order = 2;
    s.mcmc.chains = 1;
    assert!(s.validate().is_err());
    s.mcmc.chains = 2;
    s.mcmc.burn_in = s.mcmc.iterations;
    assert!(s.validate().is_err());
}

#[test]
fn intercept_only_matches_sample_moments() {
    let sim = simulate(cal(), 3.0, &[], &[], 2.0, Seed::new(1));
    let post = fit_bayes(&sim.y, None, &cal(), &quick(0, 0, 2)).unwrap();
    let m = post.posterior_mean();
    let obs = sim.y.observed();
    let sd = crate::stats::sample_sd(&obs);
    assert!((m.intercept - crate::stats::mean(&obs)).abs() < 0.05 * sd);
    assert!((m.sigma / sd - 1.0).abs() < 0.05);
    assert!(post.converged);
}

#[test]
fn draws_are_deterministic() {
    let sim = simulate(cal(), 0.0, &[0.5, 0.2], &[0.7], 1.0, Seed::new(3));
    let a = fit_bayes(&sim.y, Some(&sim.pcs), &cal(), &quick(2, 1, 9)).unwrap();
    let b = fit_bayes(&sim.y, Some(&sim.pcs), &cal(), &quick(2, 1, 9)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.draws.len(), 4 * 1000);
    assert!(a.draws.iter().all(|d| d.sigma > 0.0));
}

#[test]
fn recovers_known_parameters() {
    let truth = [0.4, 0.5, -0.2, 1.0, -0.5, 0.3, 0.8];
    let sim = simulate(cal(), truth[0], &truth[1..3], &truth[3..6], truth[6], Seed::new(4));
    let post = fit_bayes(&sim.y, Some(&sim.pcs), &cal(), &quick(2, 3, 5)).unwrap();
    assert!(post.converged, "{:?}", post.rhat);
    let iv = post.intervals(0.999);
    for (j, (lo, hi)) in iv.iter().enumerate() {
        assert!(*lo <= truth[j] && truth[j] <= *hi, "{} {lo} {hi} {}", post.parameter_names()[j], truth[j]);
    }
}

#[test]
fn forward_fit_on_pure_ar2() {
    let sim = simulate(cal(), 0.0, &[0.5, 0.3], &[], 1.0, Seed::new(6));
    let mut spec = quick(2, 0, 7);
    spec.direction = ArDirection::Forward;
    let post = fit_bayes(&sim.y, None, &cal(), &spec).unwrap();
    let m = post.posterior_mean();
    assert!((m.ar[0] - 0.5).abs() < 0.25 && (m.ar[1] - 0.3).abs() < 0.25);
    assert_eq!(post.n_obs, 147);
}

#[test]
fn split_rhat_detects_disagreement() {
    let mut rng = Seed::new(8).rng();
    let same: Vec<Vec<f64>> = (0..4).map(|_| (0..1000).map(|_| normal(&mut rng)).collect()).collect();
    assert!(split_rhat(&same) < 1.02);
    let shifted: Vec<Vec<f64>> = same.iter().enumerate().map(|(c, v)| v.iter().map(|x| x + c as f64).collect()).collect();
    assert!(split_rhat(&shifted) > 1.05);
}

fn past() -> YearRange {
    YearRange::new(998, 1849).unwrap()
}

fn long_sim(beta: &[f64], seed: u64) -> Sim {
    simulate(YearRange::new(998, 1998).unwrap(), 0.2, &[0.4, 0.2], beta, 0.5, Seed::new(seed))
}

#[test]
fn backcast_shape_and_errors() {
    let sim = long_sim(&[0.6, 0.3], 10);
    let post = fit_bayes(&sim.y, Some(&sim.pcs), &cal(), &quick(2, 2, 11)).unwrap();
    let ens = backcast_paths(&post, Some(&sim.pcs), &past(), Some(200), Seed::new(1)).unwrap();
    assert_eq!(ens.paths.ncols(), 852);
    assert_eq!(ens.n_paths(), 200);
    assert_eq!(ensemble_csv(&ens).lines().count(), 1 + 200 * 852);

    let gap = YearRange::new(998, 1800).unwrap();
    assert!(matches!(backcast_paths(&post, Some(&sim.pcs), &gap, None, Seed::new(1)), Err(Error::Config(_))));
    let mut holes = sim.pcs.clone();
    holes.missing[10] = true;
    assert!(matches!(backcast_paths(&post, Some(&holes), &past(), None, Seed::new(1)), Err(Error::Coverage(_))));
}

#[test]
fn zero_innovation_paths_follow_the_surface() {
    let sim = long_sim(&[0.6], 12);
    let mut post = fit_bayes(&sim.y, Some(&sim.pcs), &cal(), &quick(0, 1, 13)).unwrap();
    for d in post.draws.iter_mut() {
        d.sigma = 0.0;
    }
    let ens = backcast_paths(&post, Some(&sim.pcs), &past(), Some(50), Seed::new(2)).unwrap();
    for (i, d) in ens.parameter_draws.iter().enumerate() {
        for (j, t) in past().years().enumerate() {
            let surface = d.intercept + d.beta[0] * sim.pcs.row(t).unwrap()[0];
            assert!((ens.paths[(i, j)] - surface).abs() < 1e-12);
        }
    }
    let bands = decompose_uncertainty(&post, Some(&sim.pcs), &past(), 0.95, Some(50), Seed::new(3)).unwrap();
    assert!(bands.epsilon_only.iter().all(|b| b.width() == 0.0));
}

#[test]
fn single_draw_has_no_beta_band() {
    let sim = long_sim(&[0.6], 14);
    let mut post = fit_bayes(&sim.y, Some(&sim.pcs), &cal(), &quick(2, 1, 15)).unwrap();
    post.draws.truncate(1);
    let bands = decompose_uncertainty(&post, Some(&sim.pcs), &past(), 0.9, None, Seed::new(4)).unwrap();
    assert!(bands.beta_only.iter().all(|b| b.width() == 0.0));
}

#[test]
fn total_band_dominates_components() {
    let sim = long_sim(&[0.6, 0.3], 16);
    let post = fit_bayes(&sim.y, Some(&sim.pcs), &cal(), &quick(2, 2, 17)).unwrap();
    let b = decompose_uncertainty(&post, Some(&sim.pcs), &past(), 0.95, Some(2000), Seed::new(5)).unwrap();
    for j in 0..b.total.len() {
        let t = b.total[j].width();
        assert!(t >= b.beta_only[j].width());
        assert!(t >= b.epsilon_only[j].width() * 0.95, "year {j}: {t} vs {}", b.epsilon_only[j].width());
    }
    assert_eq!(bands_csv(&b).lines().count(), 1 + 3 * 852);
}

#[test]
fn smoothing_rules() {
    let sim = long_sim(&[0.6], 18);
    let post = fit_bayes(&sim.y, Some(&sim.pcs), &cal(), &quick(0, 1, 19)).unwrap();
    let ens = backcast_paths(&post, Some(&sim.pcs), &past(), Some(20), Seed::new(6)).unwrap();
    assert_eq!(smooth_paths(&ens, 1).unwrap().paths, ens.paths);
    assert!(matches!(smooth_paths(&ens, 30), Err(Error::Config(_))));
    assert!(smooth_paths(&ens, 853).is_err());
    let s = smooth_paths(&ens, 5).unwrap();
    let j = 100;
    let direct: f64 = (j - 2..=j + 2).map(|c| ens.paths[(3, c)]).sum::<f64>() / 5.0;
    assert!((s.paths[(3, j)] - direct).abs() < 1e-12);
    let edge: f64 = (0..=2).map(|c| ens.paths[(3, c)]).sum::<f64>() / 3.0;
    assert!((s.paths[(3, 0)] - edge).abs() < 1e-12);
}

#[test]
fn constant_pcs_keep_beta_band_under_smoothing() {
    let sim = long_sim(&[0.6], 20);
    let post = fit_bayes(&sim.y, Some(&sim.pcs), &cal(), &quick(0, 1, 21)).unwrap();
    let flat = ScoreMatrix {
        start_year: 998,
        values: DMatrix::from_element(852, 1, 0.7),
        missing: vec![false; 852],
    };
    let d = Decomposition::simulate(&post, Some(&flat), &past(), Some(300), Seed::new(7)).unwrap();
    let raw = d.bands(0.95);
    let smooth = d.smooth(31).unwrap().bands(0.95);
    for (a, b) in raw.beta_only.iter().zip(&smooth.beta_only) {
        assert!((a.width() - b.width()).abs() < 1e-10);
    }
    assert!(smooth.mean_width(PathMode::EpsilonOnly) < raw.mean_width(PathMode::EpsilonOnly) / 3.0);
}

#[test]
fn shifting_y_shifts_paths() {
    let sim = long_sim(&[0.6, 0.3], 22);
    let spec = quick(2, 2, 23);
    let a = fit_bayes(&sim.y, Some(&sim.pcs), &cal(), &spec).unwrap();
    let b = fit_bayes(&sim.y.shifted(5.0), Some(&sim.pcs), &cal(), &spec).unwrap();
    let pa = backcast_paths(&a, Some(&sim.pcs), &past(), Some(300), Seed::new(8)).unwrap();
    let pb = backcast_paths(&b, Some(&sim.pcs), &past(), Some(300), Seed::new(8)).unwrap();
    for (x, y) in pa.mean_path().iter().zip(pb.mean_path()) {
        assert!((y - x - 5.0).abs() < 1e-6);
    }
}
