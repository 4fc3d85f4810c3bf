//! Exact-integer references for the table and binomial tests.

use redupgan::stats::{fisher_exact, ContingencyTable};

pub fn choose(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Two-sided Fisher p-value by enumerating every table with the same
/// margins, comparing point probabilities as exact integers.
pub fn fisher_enumerated(t: &ContingencyTable) -> f64 {
    let m = t.a + t.b;
    let n = t.c + t.d;
    let k = t.a + t.c;
    let w = |x: u64| choose(m, x) * choose(n, k - x);
    let obs = w(t.a);
    let lo = k.saturating_sub(n);
    let hi = k.min(m);
    let tail: u128 = (lo..=hi).map(w).filter(|&v| v <= obs).sum();
    tail as f64 / choose(m + n, k) as f64
}

/// Largest deviation from enumeration over every table whose four margins
/// are at most `max_margin`, and the number of tables checked.
pub fn fisher_sweep(max_margin: u64) -> (f64, usize) {
    let mut worst = 0.0f64;
    let mut count = 0;
    for a in 0..=max_margin {
        for b in 0..=max_margin - a {
            for c in 0..=max_margin - a {
                for d in 0..=(max_margin - c).min(max_margin - b) {
                    let t = ContingencyTable::new(a, b, c, d);
                    if t.total() == 0 {
                        continue;
                    }
                    let p = fisher_exact(&t).unwrap().p_two_sided;
                    worst = worst.max((p - fisher_enumerated(&t)).abs());
                    count += 1;
                }
            }
        }
    }
    (worst, count)
}

/// Clopper-Pearson bounds from beta quantiles.
pub fn clopper_pearson_beta(x: u64, n: u64, alpha: f64) -> (f64, f64) {
    use statrs::distribution::{Beta, ContinuousCDF};
    let lo = if x == 0 {
        0.0
    } else {
        Beta::new(x as f64, (n - x + 1) as f64).unwrap().inverse_cdf(alpha / 2.0)
    };
    let hi = if x == n {
        1.0
    } else {
        Beta::new((x + 1) as f64, (n - x) as f64).unwrap().inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Two-sided exact binomial p-value from the statrs pmf.
pub fn binom_p_reference(x: u64, n: u64, p0: f64) -> f64 {
    use statrs::distribution::{Binomial, Discrete};
    let b = Binomial::new(p0, n).unwrap();
    let obs = b.pmf(x);
    (0..=n).map(|i| b.pmf(i)).filter(|&v| v <= obs * (1.0 + 1e-7)).sum::<f64>().min(1.0)
}
