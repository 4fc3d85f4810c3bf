use serde::{Deserialize, Serialize};

use super::{ln_choose, REL_ERR};
use crate::error::{Error, Result};

/// A 2x2 table. Rows are conditions, columns are (absent, present) for the
/// outcome being counted:
///
/// ```text
///             absent  present
/// condition A    a       b
/// condition B    c       d
/// ```
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl ContingencyTable {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        Self { a, b, c, d }
    }

    pub fn from_rows(rows: [[u64; 2]; 2]) -> Self {
        Self::new(rows[0][0], rows[0][1], rows[1][0], rows[1][1])
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }

    pub fn swap_rows(&self) -> Self {
        Self::new(self.c, self.d, self.a, self.b)
    }

    /// Odds ratio a·d / (b·c). `NaN` when both products are zero.
    pub fn sample_odds_ratio(&self) -> f64 {
        let num = (self.a as f64) * (self.d as f64);
        let den = (self.b as f64) * (self.c as f64);
        if den == 0.0 {
            if num == 0.0 {
                f64::NAN
            } else {
                f64::INFINITY
            }
        } else {
            num / den
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContingencyResult {
    pub table: ContingencyTable,
    pub p_two_sided: f64,
    /// Conditional maximum-likelihood estimate; `inf` / `0` at the edges of
    /// the support.
    pub odds_ratio_cmle: f64,
    pub sample_or: f64,
}

/// The conditional distribution of the top-left cell given all margins.
pub(crate) struct Hypergeometric {
    /// Smallest attainable value of the top-left cell.
    pub lo: u64,
    pub hi: u64,
    /// log C(m, x) + log C(n, k - x) for x in lo..=hi.
    log_weights: Vec<f64>,
}

impl Hypergeometric {
    pub fn from_table(t: &ContingencyTable) -> Self {
        let m = t.a + t.b;
        let n = t.c + t.d;
        let k = t.a + t.c;
        let lo = k.saturating_sub(n);
        let hi = k.min(m);
        let log_weights = (lo..=hi)
            .map(|x| ln_choose(m, x) + ln_choose(n, k - x))
            .collect();
        Self {
            lo,
            hi,
            log_weights,
        }
    }

    /// Point probabilities under odds ratio `psi` (given on the log scale).
    pub fn probabilities(&self, log_psi: f64) -> Vec<f64> {
        let logs: Vec<f64> = self
            .log_weights
            .iter()
            .enumerate()
            .map(|(i, w)| w + log_psi * (self.lo + i as u64) as f64)
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }

    /// Mean and variance of the cell under odds ratio exp(log_psi).
    pub fn moments(&self, log_psi: f64) -> (f64, f64) {
        let p = self.probabilities(log_psi);
        let mut mean = 0.0;
        for (i, pi) in p.iter().enumerate() {
            mean += pi * (self.lo + i as u64) as f64;
        }
        let mut var = 0.0;
        for (i, pi) in p.iter().enumerate() {
            let dx = (self.lo + i as u64) as f64 - mean;
            var += pi * dx * dx;
        }
        (mean, var)
    }
}

/// Residual of the conditional score equation E_psi[a] - a at `psi`.
pub fn conditional_score_residual(t: &ContingencyTable, psi: f64) -> f64 {
    let h = Hypergeometric::from_table(t);
    h.moments(psi.ln()).0 - t.a as f64
}

fn cmle_odds_ratio(t: &ContingencyTable, h: &Hypergeometric) -> f64 {
    if h.lo == h.hi {
        // a single attainable table carries no information
        return f64::NAN;
    }
    if t.a == h.lo {
        return 0.0;
    }
    if t.a == h.hi {
        return f64::INFINITY;
    }
    let target = t.a as f64;
    // E[X] is increasing in log psi; bracket then bisect, finish with Newton.
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while h.moments(lo).0 > target {
        lo *= 2.0;
    }
    while h.moments(hi).0 < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if h.moments(mid).0 < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let (mean, var) = h.moments(x);
        if var <= 0.0 {
            break;
        }
        let next = x - (mean - target) / var;
        if next.is_finite() && next >= lo - 1e-9 && next <= hi + 1e-9 {
            x = next;
        }
    }
    x.exp()
}

/// Fisher's exact test on a 2x2 table.
///
/// The two-sided p-value sums the null (odds ratio 1) point probabilities no
/// larger than the observed one. The odds ratio is the conditional MLE, the
/// root of E_psi[a | margins] = a.
pub fn fisher_exact(t: &ContingencyTable) -> Result<ContingencyResult> {
    if t.total() == 0 {
        return Err(Error::invalid("fisher_exact: all-zero table"));
    }
    let h = Hypergeometric::from_table(t);
    let p = h.probabilities(0.0);
    let observed = p[(t.a - h.lo) as usize];
    let p_two_sided = p
        .iter()
        .filter(|&&v| v <= observed * REL_ERR)
        .sum::<f64>()
        .min(1.0);
    Ok(ContingencyResult {
        table: *t,
        p_two_sided,
        odds_ratio_cmle: cmle_odds_ratio(t, &h),
        sample_or: t.sample_odds_ratio(),
    })
}
