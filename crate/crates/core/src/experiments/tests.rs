use super::*;
use crate::data::YearRange;

fn small(recipe: Recipe) -> ExperimentSpec {
    let s = ExperimentSpec::new(recipe, 7);
    let set = |mut s: ExperimentSpec, kv: &[(&str, &str)]| {
        for (k, v) in kv {
            s.set_param(k, v).unwrap();
        }
        s
    };
    match recipe {
        Recipe::CpsNulls => set(
            s,
            &[
                ("replications", "5"),
                ("n_series", "20"),
                ("stride", "30"),
                ("nulls", r#"["white", "ar1(0.4)", "brownian"]"#),
                ("cv_repetitions", "1"),
            ],
        ),
        Recipe::Tingley => set(
            s,
            &[("replicates", "2"), ("n_series", "40"), ("sigma_omegas", "[0.5]")],
        ),
        Recipe::TingleyPerturbed => set(
            s,
            &[("replicates", "2"), ("n_series", "40"), ("sigma_betas", "[0.0, 3.0]")],
        ),
        Recipe::SmerdonSnr | Recipe::SmerdonAppend | Recipe::SmerdonSlope => set(
            s,
            &[("n_local", "30"), ("methods", r#"["cps", "lasso"]"#), ("cv_repetitions", "1")],
        ),
        Recipe::CenteringBug => set(s, &[("replicates", "3"), ("n_series", "20")]),
        Recipe::BayesBackcast => set(
            s,
            &[
                ("years", "[1700, 1998]"),
                ("k", "3"),
                ("models", r#"["ar2_pc3", "pc3"]"#),
                ("iterations", "400"),
                ("burn_in", "200"),
                ("chains", "2"),
                ("max_paths", "50"),
                ("n_series", "20"),
            ],
        ),
        Recipe::PcCriteria => set(s, &[("eigenvalues", "[4.0, 3.0, 2.0, 1.0]"), ("random_spectra", "10")]),
        Recipe::SimFidelity => set(
            s,
            &[("n_series", "20"), ("n_boot", "100"), ("sims", r#"["white", "ar1_empirical"]"#)],
        ),
    }
}

#[test]
fn every_recipe_runs_small() {
    for r in Recipe::ALL {
        let b = run(&small(r)).unwrap();
        assert_eq!(b.manifest.n_failed(), 0, "{r}: {:?}", b.manifest.stages);
        assert_eq!(b.manifest.mode, "synthetic");
        assert!(!b.files.is_empty(), "{r}");
        for f in &b.manifest.files {
            assert_eq!(sha256_hex(b.file(&f.path).unwrap()), f.sha256);
        }
    }
}

#[test]
fn bundles_are_deterministic() {
    let s = small(Recipe::CenteringBug);
    let a = run(&s).unwrap();
    let b = run(&s).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.manifest_json().unwrap(), b.manifest_json().unwrap());
    let mut other = s.clone();
    other.seed = 8;
    assert_ne!(run(&other).unwrap().files, a.files);
}

#[test]
fn manifest_lists_defaults() {
    let b = run(&small(Recipe::PcCriteria)).unwrap();
    assert_eq!(b.manifest.params["thresholds"], serde_json::json!([0.7, 0.8, 0.9]));
    assert_eq!(b.manifest.params["random_spectra"], serde_json::json!(10));
}

#[test]
fn pc_criteria_hand_spectrum() {
    let b = run(&small(Recipe::PcCriteria)).unwrap();
    let rep: serde_json::Value = serde_json::from_slice(b.file("reports/pc_criteria.json").unwrap()).unwrap();
    assert_eq!(rep["random"]["n_violations"], 0);
    let csv = String::from_utf8(b.file("tables/pc_selection.csv").unwrap().to_vec()).unwrap();
    assert!(csv.lines().count() > 1);
}

#[test]
fn unknown_keys_rejected() {
    let mut s = ExperimentSpec::new(Recipe::Tingley, 1);
    assert!(s.set_param("no_such_key", "1").is_err());
    let s = ExperimentSpec::new(Recipe::Tingley, 1).with_input("proxies", "x.csv");
    assert!(matches!(s.validate(), Err(Error::Config(_))));
    let s = ExperimentSpec::new(Recipe::Tingley, 1).with_input("target", "/nonexistent/t.csv");
    assert!(run(&s).is_err());
}

#[test]
fn spec_from_toml() {
    let s = ExperimentSpec::from_toml(
        "recipe = \"cps_nulls\"\nseed = 3\n[params]\nreplications = 4\nnulls = [\"white\"]\n",
    )
    .unwrap();
    assert_eq!(s.recipe, Recipe::CpsNulls);
    assert_eq!(s.seed, 3);
    assert!(ExperimentSpec::from_toml("recipe = \"nope\"").is_err());
    assert!(ExperimentSpec::from_toml("recipe = \"tingley\"\nbogus = 1").is_err());
}

#[test]
fn recipe_names_roundtrip() {
    for r in Recipe::ALL {
        assert_eq!(r.as_str().parse::<Recipe>().unwrap(), r);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(json, format!("\"{}\"", r.as_str()));
    }
}

#[test]
fn method_and_null_labels() {
    for m in ["cps", "cps_abs_corr", "composite", "ols", "lasso", "lasso_tingley", "lasso_fixed:0.1", "enet:0.5", "pc_ols:3", "arma:1:0"] {
        parse_method(m, 5, 1).unwrap();
    }
    let labels: Vec<String> = ["lasso", "lasso_tingley", "lasso_fixed:0.1", "noncentral_lasso"]
        .iter()
        .map(|m| parse_method(m, 5, 1).unwrap().label())
        .collect();
    assert_eq!(labels, ["lasso", "lasso_tingley", "lasso_fixed(0.1)", "noncentral_lasso"]);
    assert!(parse_method("lasso_fixed:x", 5, 1).is_err());
    assert!(parse_method("ridge", 5, 1).is_err());
    let t = synthetic_target(&[0.5], YearRange::new(1900, 1959).unwrap(), &YearRange::new(1900, 1959).unwrap(), Seed::new(1)).unwrap();
    let x = signal_columns(&t, 4, (0.3, 0.3), (0.5, 0.5), crate::data::SeriesKind::Pseudoproxy, "p", Seed::new(2)).unwrap();
    for n in ["white", "ar1(0.3)", "ar1_empirical", "brownian"] {
        parse_null(n, &x, &t.range()).unwrap();
    }
    assert!(parse_null("ar1(2)", &x, &t.range()).is_err());
    assert!(parse_null("pink", &x, &t.range()).is_err());
}

#[test]
fn parse_value_falls_back_to_string() {
    assert_eq!(parse_value("3"), toml::Value::Integer(3));
    assert_eq!(parse_value("[1, 2]"), toml::Value::Array(vec![1.into(), 2.into()]));
    assert_eq!(parse_value("cps"), toml::Value::String("cps".into()));
}

#[test]
fn signal_columns_track_target() {
    let cal = YearRange::new(1850, 1998).unwrap();
    let t = synthetic_target(&[0.5, 0.2], cal, &cal, Seed::new(3)).unwrap();
    let x = signal_columns(&t, 50, (0.9, 0.9), (0.3, 0.9), crate::data::SeriesKind::Pseudoproxy, "p", Seed::new(4)).unwrap();
    let y = t.raw_values();
    let mean_r: f64 = (0..50)
        .map(|j| crate::stats::correlation(x.column(j).raw_values(), y).unwrap())
        .sum::<f64>()
        / 50.0;
    assert!((mean_r - 0.9).abs() < 0.05, "{mean_r}");
    assert!(x.columns().iter().all(|c| c.latitude.is_some()));
}
