use serde::{Deserialize, Serialize};

use super::{ln_choose, REL_ERR};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomResult {
    pub successes: u64,
    pub trials: u64,
    pub p0: f64,
    pub p_two_sided: f64,
    pub estimate: f64,
    /// Clopper-Pearson 95% interval.
    pub ci_lower: f64,
    pub ci_upper: f64,
}

fn ln_pmf(x: u64, n: u64, p: f64) -> f64 {
    if p <= 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if p >= 1.0 {
        return if x == n { 0.0 } else { f64::NEG_INFINITY };
    }
    ln_choose(n, x) + x as f64 * p.ln() + (n - x) as f64 * (-p).ln_1p()
}

/// P(X <= x).
pub(crate) fn lower_tail(x: u64, n: u64, p: f64) -> f64 {
    (0..=x).map(|i| ln_pmf(i, n, p).exp()).sum::<f64>().min(1.0)
}

/// P(X >= x).
pub(crate) fn upper_tail(x: u64, n: u64, p: f64) -> f64 {
    (x..=n).map(|i| ln_pmf(i, n, p).exp()).sum::<f64>().min(1.0)
}

/// Bisection for a monotone function on [0, 1]; `increasing` gives its
/// direction.
fn bisect(target: f64, increasing: bool, f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let below = f(mid) < target;
        if below == increasing {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Clopper-Pearson interval at level 1 - alpha, by inverting the binomial
/// tails (equivalently, bisecting the beta quantiles).
pub fn clopper_pearson(x: u64, n: u64, alpha: f64) -> (f64, f64) {
    let half = alpha / 2.0;
    let lower = if x == 0 {
        0.0
    } else {
        bisect(half, true, |p| upper_tail(x, n, p))
    };
    let upper = if x == n {
        1.0
    } else {
        bisect(half, false, |p| lower_tail(x, n, p))
    };
    (lower, upper)
}

/// Exact two-sided binomial test of H0: success probability = `p0`.
pub fn binom_exact(successes: u64, trials: u64, p0: f64) -> Result<BinomResult> {
    if trials == 0 {
        return Err(Error::invalid("binom_exact: zero trials"));
    }
    if successes > trials {
        return Err(Error::invalid(format!(
            "binom_exact: {successes} successes out of {trials} trials"
        )));
    }
    if !(0.0..=1.0).contains(&p0) {
        return Err(Error::invalid(format!("binom_exact: p0 = {p0} outside [0,1]")));
    }
    let observed = ln_pmf(successes, trials, p0).exp();
    let p_two_sided = (0..=trials)
        .map(|i| ln_pmf(i, trials, p0).exp())
        .filter(|&d| d <= observed * REL_ERR)
        .sum::<f64>()
        .min(1.0);
    let (ci_lower, ci_upper) = clopper_pearson(successes, trials, 0.05);
    Ok(BinomResult {
        successes,
        trials,
        p0,
        p_two_sided,
        estimate: successes as f64 / trials as f64,
        ci_lower,
        ci_upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_pair_analysis() {
        for p0 in [0.2, 1.0 / 243.0] {
            let r = binom_exact(25, 45, p0).unwrap();
            assert!(r.p_two_sided < 1e-4, "{r:?}");
            assert!((r.ci_lower - 0.40).abs() <= 0.01, "{r:?}");
            assert!((r.ci_upper - 0.70).abs() <= 0.01, "{r:?}");
        }
    }

    #[test]
    fn degenerate_null() {
        let r = binom_exact(0, 10, 0.0).unwrap();
        assert_eq!(r.p_two_sided, 1.0);
        assert_eq!(r.ci_lower, 0.0);
        assert!(binom_exact(1, 10, 0.0).unwrap().p_two_sided == 0.0);
    }

    #[test]
    fn errors() {
        assert!(binom_exact(0, 0, 0.5).is_err());
        assert!(binom_exact(3, 2, 0.5).is_err());
        assert!(binom_exact(1, 2, 1.5).is_err());
    }

    #[test]
    fn interval_tails_hit_alpha_half() {
        for (x, n) in [(1u64, 10u64), (25, 45), (7, 7), (0, 20), (50, 100)] {
            let (lo, hi) = clopper_pearson(x, n, 0.05);
            assert!(lo <= x as f64 / n as f64 && x as f64 / n as f64 <= hi);
            if x > 0 {
                assert!((upper_tail(x, n, lo) - 0.025).abs() < 1e-8);
            }
            if x < n {
                assert!((lower_tail(x, n, hi) - 0.025).abs() < 1e-8);
            }
        }
    }
}
