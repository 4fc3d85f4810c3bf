mod common;

use proptest::prelude::*;
use rand::Rng;
use redupgan::gantrain::VarId;
use redupgan::probe::{
    fit_lasso_logistic, lambda_max, objective, rank_variables, LassoOptions, ProbeDataset, ProbeModel,
};

use common::lasso_oracle::*;

fn dataset(x: Vec<Vec<f64>>, y: Vec<bool>) -> ProbeDataset {
    let p = x[0].len();
    ProbeDataset::new((0..p).map(VarId::Z).collect(), x, y, "y").unwrap()
}

fn fit_at(ds: &ProbeDataset, lambda: f64) -> ProbeModel {
    fit_lasso_logistic(ds, Some(&[lambda]), &LassoOptions::default()).unwrap()
}

#[test]
fn objective_matches_proximal_gradient_reference() {
    for seed in 0..10 {
        let (x, y) = random_problem(seed);
        let ds = dataset(x.clone(), y.clone());
        let lambda = lambda_max(&x, &y) * common::rng(seed + 100).gen_range(0.05..0.6);
        let m = fit_at(&ds, lambda);
        let ours = objective(&x, &y, m.intercept, &m.coefficients, lambda);
        let (b0, beta) = proximal_reference(&x, &y, lambda);
        let reference = objective(&x, &y, b0, &beta, lambda);
        assert!(
            (ours - reference).abs() < 1e-6,
            "seed {seed}: {ours} vs reference {reference}"
        );
    }
}

#[test]
fn solution_satisfies_kkt() {
    for seed in 0..10 {
        let (x, y) = random_problem(seed);
        let lambda = lambda_max(&x, &y) * 0.2;
        let m = fit_at(&dataset(x.clone(), y.clone()), lambda);
        let r = kkt_residual(&x, &y, m.intercept, &m.coefficients, lambda);
        assert!(r < 1e-5, "seed {seed}: residual {r:.3e}");
    }
}

#[test]
fn planted_signal_is_recovered() {
    for seed in 0..10 {
        let (x, y) = planted_problem(seed);
        let m = fit_lasso_logistic(&dataset(x, y), None, &LassoOptions::default()).unwrap();
        let rank = rank_variables(&m, 0.0);
        assert_eq!(rank[0].0, VarId::Z(3), "seed {seed}: {rank:?}");
        let next = rank.get(1).map_or(0.0, |r| r.1);
        assert!(rank[0].1 >= 5.0 * next, "seed {seed}: {rank:?}");
    }
}

#[test]
fn cv_choice_is_the_deviance_minimum() {
    let (x, y) = planted_problem(3);
    let m = fit_lasso_logistic(&dataset(x, y), None, &LassoOptions::default()).unwrap();
    assert!(!m.cv.is_empty() && m.cv.len() <= 100);
    let best = m.cv.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let first = m.cv.iter().find(|c| c.1 == best).unwrap();
    assert_eq!(first.0, m.lambda);
    assert!(m.coefficients.iter().all(|c| c.is_finite()));
}

#[test]
fn fold_seed_makes_fit_deterministic() {
    let (x, y) = planted_problem(5);
    let ds = dataset(x, y);
    let a = fit_lasso_logistic(&ds, None, &LassoOptions::default()).unwrap();
    let b = fit_lasso_logistic(&ds, None, &LassoOptions::default()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn constant_columns_are_dropped() {
    let (mut x, y) = planted_problem(1);
    for r in &mut x {
        r[7] = 2.5;
    }
    let m = fit_lasso_logistic(&dataset(x, y), None, &LassoOptions::default()).unwrap();
    assert_eq!(m.dropped, vec!["z7".to_string()]);
    assert_eq!(m.coefficients[7], 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn ranking_ignores_column_order(seed in 0u64..1000, shift in 1usize..10) {
        let (x, y) = planted_problem(seed);
        let p = x[0].len();
        let ds = dataset(x.clone(), y.clone());
        let lambda = lambda_max(&x, &y) * 0.1;
        let a = fit_at(&ds, lambda);
        // rotate columns but keep their ids
        let perm: Vec<usize> = (0..p).map(|j| (j + shift) % p).collect();
        let xp = x.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
        let ids = perm.iter().map(|&j| VarId::Z(j)).collect();
        let b = fit_lasso_logistic(&ProbeDataset::new(ids, xp, y, "y").unwrap(), Some(&[lambda]), &LassoOptions::default()).unwrap();
        let ra = rank_variables(&a, 1e-6);
        let rb = rank_variables(&b, 1e-6);
        prop_assert_eq!(ra.len(), rb.len());
        for (u, v) in ra.iter().zip(&rb) {
            prop_assert_eq!(u.0, v.0);
            prop_assert!((u.1 - v.1).abs() < 1e-5);
        }
    }

    #[test]
    fn kkt_holds_across_lambda(seed in 0u64..1000, frac in 0.02f64..0.9) {
        let (x, y) = random_problem(seed);
        let lambda = lambda_max(&x, &y) * frac;
        let m = fit_at(&dataset(x.clone(), y.clone()), lambda);
        prop_assert!(kkt_residual(&x, &y, m.intercept, &m.coefficients, lambda) < 1e-5);
    }
}
