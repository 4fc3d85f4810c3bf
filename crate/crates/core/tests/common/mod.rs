#![allow(dead_code)]

pub mod grad;
pub mod lasso_oracle;
pub mod stats_oracle;

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redupgan::nn::{Network, NetworkSpec, Tensor};

/// Central-difference step.
pub const H: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const REL_FLOOR: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct FdReport {
    pub max_rel: f64,
    pub checked: usize,
    /// Coordinates sitting on an activation kink (h and h/2 differences
    /// disagree), not comparable.
    pub kinks: usize,
}

impl FdReport {
    pub fn merge(self, o: FdReport) -> FdReport {
        FdReport {
            max_rel: self.max_rel.max(o.max_rel),
            checked: self.checked + o.checked,
            kinks: self.kinks + o.kinks,
        }
    }
}

/// Compares `analytic[i]` with central differences of `f` at `x` for each
/// coordinate in `coords`.
pub fn fd_check(x: &[f64], analytic: &[f64], coords: &[usize], mut f: impl FnMut(&[f64]) -> f64) -> FdReport {
    let mut rep = FdReport::default();
    let mut buf = x.to_vec();
    let f0 = f(x).abs();
    let mut central = |i: usize, h: f64, buf: &mut Vec<f64>| {
        buf[i] = x[i] + h;
        let p = f(buf);
        buf[i] = x[i] - h;
        let m = f(buf);
        buf[i] = x[i];
        (p - m) / (2.0 * h)
    };
    for &i in coords {
        let n1 = central(i, H, &mut buf);
        let n2 = central(i, H / 2.0, &mut buf);
        if (n1 - n2).abs() > 1e-8 * (1.0 + f0) + 1e-6 * n1.abs() {
            rep.kinks += 1;
            continue;
        }
        rep.checked += 1;
        rep.max_rel = rep.max_rel.max(rel_err(analytic[i], n1));
    }
    rep
}

pub fn flatten(ts: &[Tensor<f64>]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

pub fn unflatten(like: &[Tensor<f64>], flat: &[f64]) -> Vec<Tensor<f64>> {
    let mut off = 0;
    like.iter()
        .map(|t| {
            let n = t.len();
            let out = Tensor::new(t.shape().to_vec(), flat[off..off + n].to_vec()).unwrap();
            off += n;
            out
        })
        .collect()
}

pub fn with_params(spec: &NetworkSpec, like: &[Tensor<f64>], flat: &[f64]) -> Network<f64> {
    Network::new(spec.clone(), unflatten(like, flat)).unwrap()
}

/// Up to `k` coordinates from every tensor (all of them when smaller).
pub fn sample_coords(like: &[Tensor<f64>], k: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    let mut off = 0;
    for t in like {
        let n = t.len();
        if n <= k {
            out.extend(off..off + n);
        } else {
            for _ in 0..k {
                out.push(off + r.gen_range(0..n));
            }
        }
        off += n;
    }
    out
}

pub fn random_tensor(shape: Vec<usize>, scale: f64, r: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| r.gen_range(-scale..scale))
}

/// Two-sided upper tail of a chi-square statistic.
pub fn chi2_p(stat: f64, dof: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    1.0 - ChiSquared::new(dof).unwrap().cdf(stat)
}

pub fn chi2_uniform(counts: &[u64]) -> f64 {
    let n: u64 = counts.iter().sum();
    let e = n as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    chi2_p(stat, counts.len() as f64 - 1.0)
}

/// Every file under `dir` as (relative path, bytes), sorted.
pub fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
