mod common;

use common::stats_oracle::*;
use proptest::prelude::*;
use redupgan::stats::{binom_exact, clopper_pearson, conditional_score_residual, fisher_exact, ContingencyTable};

#[test]
fn fisher_p_matches_enumeration_for_small_margins() {
    let (worst, count) = fisher_sweep(30);
    assert!(count > 100_000, "{count}");
    assert!(worst <= 1e-12, "worst deviation {worst:e}");
}

#[test]
fn reported_tables() {
    for (rows, or, tol) in [
        ([[78, 22], [40, 60]], 5.27, 0.05),
        ([[98, 2], [13, 87]], 308.3, 5.0),
        ([[33, 67], [1, 99]], 48.1, 1.0),
        ([[33, 67], [4, 96]], 11.7, 0.5),
    ] {
        let r = fisher_exact(&ContingencyTable::from_rows(rows)).unwrap();
        assert!((r.odds_ratio_cmle - or).abs() < tol, "{rows:?}: {r:?}");
        assert!(r.p_two_sided < 1e-4, "{rows:?}: {r:?}");
    }
}

#[test]
fn identical_pair_rate() {
    for p0 in [0.2, 1.0 / 243.0] {
        let r = binom_exact(25, 45, p0).unwrap();
        assert!(r.p_two_sided < 1e-4);
        assert!((r.ci_lower - 0.40).abs() <= 0.01 && (r.ci_upper - 0.70).abs() <= 0.01, "{r:?}");
    }
}

proptest! {
    #[test]
    fn cmle_solves_the_conditional_score(a in 1u64..60, b in 1u64..60, c in 1u64..60, d in 1u64..60) {
        let t = ContingencyTable::new(a, b, c, d);
        let r = fisher_exact(&t).unwrap();
        prop_assert!(r.odds_ratio_cmle.is_finite() && r.odds_ratio_cmle > 0.0);
        prop_assert!(conditional_score_residual(&t, r.odds_ratio_cmle).abs() < 1e-6);
    }

    #[test]
    fn fisher_p_is_a_probability_and_row_symmetric(a in 0u64..80, b in 0u64..80, c in 0u64..80, d in 0u64..80) {
        prop_assume!(a + b + c + d > 0);
        let t = ContingencyTable::new(a, b, c, d);
        let p = fisher_exact(&t).unwrap().p_two_sided;
        prop_assert!(p > 0.0 && p <= 1.0);
        prop_assert!((p - fisher_exact(&t.swap_rows()).unwrap().p_two_sided).abs() < 1e-12);
    }

    #[test]
    fn binomial_matches_reference(n in 1u64..150, frac in 0.0f64..1.0, p0 in 0.001f64..0.999) {
        let x = ((n as f64) * frac).floor() as u64;
        let r = binom_exact(x, n, p0).unwrap();
        prop_assert!((r.p_two_sided - binom_p_reference(x, n, p0)).abs() < 1e-9);
        let (lo, hi) = clopper_pearson(x, n, 0.05);
        let (rlo, rhi) = clopper_pearson_beta(x, n, 0.05);
        prop_assert!((lo - rlo).abs() < 1e-8 && (hi - rhi).abs() < 1e-8, "{lo} {hi} vs {rlo} {rhi}");
        prop_assert!(lo <= r.estimate && r.estimate <= hi);
    }
}
