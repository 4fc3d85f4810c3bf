//! Exact categorical statistics: Fisher's exact test with the conditional
//! maximum-likelihood odds ratio, and the exact binomial test with a
//! Clopper-Pearson interval.

mod binom;
mod fisher;
mod table;

pub use binom::{binom_exact, clopper_pearson, BinomResult};
pub use fisher::{conditional_score_residual, fisher_exact, ContingencyResult, ContingencyTable};
pub use table::{table_from_annotations, AnnotationField};

/// Relative tolerance used when deciding whether a point probability is "no
/// more likely" than the observed one.
pub(crate) const REL_ERR: f64 = 1.0 + 1e-7;

/// Natural log of the gamma function (Lanczos, g = 7, n = 9).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = COEF[0];
    let t = x + 7.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}
