//! Monte-Carlo comparisons between estimators, 20 paired replications each.

use std::collections::BTreeMap;

use rbls::harness::{run_experiment, ExperimentConfig, Scenario};
use rbls::Method;

fn median_errors(cfg: &ExperimentConfig) -> BTreeMap<(Method, usize), f64> {
    let mut groups: BTreeMap<(Method, usize), Vec<f64>> = BTreeMap::new();
    for r in run_experiment(cfg).unwrap() {
        assert!(r.error.is_none(), "{:?}", r.error);
        groups.entry((r.method, r.n_subs)).or_default().push(r.est_error.unwrap());
    }
    groups
        .into_iter()
        .map(|(k, mut v)| {
            v.sort_by(f64::total_cmp);
            (k, 0.5 * (v[9] + v[10]))
        })
        .collect()
}

fn corrupted(methods: Vec<Method>, grid: Vec<usize>) -> ExperimentConfig {
    ExperimentConfig {
        methods,
        n_subs_grid: Some(grid),
        replications: 20,
        n_test: 10,
        base_seed: 31,
        deterministic: true,
        ..ExperimentConfig::default()
    }
}

fn gaussian(n: usize, p: usize, methods: Vec<Method>, grid: Vec<usize>) -> ExperimentConfig {
    ExperimentConfig {
        scenario: Scenario::Gaussian,
        n,
        p,
        pi: 0.0,
        ..corrupted(methods, grid)
    }
}

#[test]
fn iws_beats_ols_at_8p_under_corruption() {
    let m = median_errors(&corrupted(vec![Method::Ols, Method::IwsLs], vec![400]));
    assert!(m[&(Method::IwsLs, 400)] < m[&(Method::Ols, 400)], "{m:?}");
}

#[test]
fn aiws_is_within_a_quarter_of_iws_at_8p() {
    let m = median_errors(&corrupted(vec![Method::IwsLs, Method::AiwsLs], vec![400]));
    let (iws, aiws) = (m[&(Method::IwsLs, 400)], m[&(Method::AiwsLs, 400)]);
    assert!((aiws - iws).abs() <= 0.25 * iws, "AIWS_LS {aiws:.4} vs IWS_LS {iws:.4}");
}

#[test]
fn arws_beats_ols_at_8p_under_corruption() {
    let m = median_errors(&corrupted(vec![Method::Ols, Method::ArwsLs], vec![400]));
    let (ols, arws) = (m[&(Method::Ols, 400)], m[&(Method::ArwsLs, 400)]);
    assert!(arws < ols, "ARWS_LS {arws:.4} vs OLS {ols:.4}");
}

#[test]
fn uluru_approaches_ols_from_above_under_corruption() {
    let grid = vec![200, 400, 800];
    let m = median_errors(&corrupted(vec![Method::Ols, Method::Uluru], grid.clone()));
    let ols = m[&(Method::Ols, 200)];
    let curve: Vec<f64> = grid.iter().map(|&k| m[&(Method::Uluru, k)]).collect();
    assert!(curve.iter().all(|&e| e >= ols), "{curve:?} vs {ols}");
    assert!(curve.windows(2).all(|w| w[1] < w[0]), "{curve:?}");
    assert!(curve[2] <= 1.25 * ols, "{curve:?} vs {ols}");
}

#[test]
fn uluru_is_no_worse_than_srht_at_4p_without_corruption() {
    let p = 16;
    let m = median_errors(&gaussian(4096, p, vec![Method::SrhtLs, Method::Uluru], vec![4 * p]));
    let (srht, uluru) = (m[&(Method::SrhtLs, 4 * p)], m[&(Method::Uluru, 4 * p)]);
    assert!(uluru <= srht, "ULURU {uluru:.4} vs SRHT_LS {srht:.4}");
}

#[test]
fn aiws_does_no_harm_without_corruption() {
    let p = 16;
    let m = median_errors(&gaussian(4096, p, vec![Method::SrhtLs, Method::AiwsLs], vec![8 * p]));
    let (srht, aiws) = (m[&(Method::SrhtLs, 8 * p)], m[&(Method::AiwsLs, 8 * p)]);
    assert!(aiws <= 2.0 * srht, "AIWS_LS {aiws:.4} vs SRHT_LS {srht:.4}");
}
