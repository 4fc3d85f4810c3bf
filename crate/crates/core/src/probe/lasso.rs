use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::gantrain::VarId;
use crate::{Error, Result};

/// Latent rows with a binary outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeDataset {
    pub columns: Vec<VarId>,
    /// Row-major, `rows x columns.len()`.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
    pub outcome: String,
}

impl ProbeDataset {
    pub fn new(columns: Vec<VarId>, x: Vec<Vec<f64>>, y: Vec<bool>, outcome: impl Into<String>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::Shape(format!("{} latent rows but {} outcomes", x.len(), y.len())));
        }
        if let Some((i, r)) = x.iter().enumerate().find(|(_, r)| r.len() != columns.len()) {
            return Err(Error::Shape(format!("row {i} has {} values, expected {}", r.len(), columns.len())));
        }
        Ok(ProbeDataset {
            columns,
            x,
            y,
            outcome: outcome.into(),
        })
    }

    pub fn rows(&self) -> usize {
        self.y.len()
    }

    pub fn positives(&self) -> usize {
        self.y.iter().filter(|&&v| v).count()
    }

    /// CSV `sample_id,z_0..z_n,outcome`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sample_id");
        for c in &self.columns {
            match c {
                VarId::Z(j) => out.push_str(&format!(",z_{j}")),
                VarId::Code(i) => out.push_str(&format!(",c_{i}")),
            }
        }
        out.push_str(",outcome\n");
        for (i, (r, y)) in self.x.iter().zip(&self.y).enumerate() {
            out.push_str(&i.to_string());
            for v in r {
                out.push_str(&format!(",{v}"));
            }
            out.push_str(if *y { ",1\n" } else { ",0\n" });
        }
        out
    }

    pub fn from_csv(text: &str, outcome: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let headers = rdr.headers()?.clone();
        let n = headers.len();
        if n < 3 || &headers[0] != "sample_id" || &headers[n - 1] != "outcome" {
            return Err(Error::Parse {
                location: "probe dataset:1".into(),
                message: "expected header sample_id,<variables>,outcome".into(),
            });
        }
        let columns = headers
            .iter()
            .skip(1)
            .take(n - 2)
            .map(|h| h.replace("c_", "c").parse())
            .collect::<Result<Vec<VarId>>>()?;
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let loc = || format!("probe dataset:{}", line + 2);
            let row = (1..n - 1)
                .map(|k| {
                    rec.get(k).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| Error::Parse {
                        location: loc(),
                        message: format!("bad value in column {}", &headers[k]),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let o = match rec.get(n - 1) {
                Some("1") => true,
                Some("0") => false,
                _ => {
                    return Err(Error::Parse {
                        location: loc(),
                        message: "outcome must be 0 or 1".into(),
                    })
                }
            };
            x.push(row);
            y.push(o);
        }
        ProbeDataset::new(columns, x, y, outcome)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LassoOptions {
    pub folds: usize,
    pub fold_seed: u64,
    pub n_lambda: usize,
    /// Smallest grid value as a fraction of the all-zero threshold.
    pub lambda_min_ratio: f64,
    pub tol: f64,
    pub max_cycles: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        LassoOptions {
            folds: 10,
            fold_seed: 0,
            n_lambda: 100,
            lambda_min_ratio: 1e-4,
            tol: 1e-7,
            max_cycles: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeModel {
    pub columns: Vec<String>,
    #[serde(skip)]
    pub ids: Vec<VarId>,
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    /// `(lambda, mean held-out deviance)` along the grid.
    pub cv: Vec<(f64, f64)>,
    /// Constant columns left out of the fit (coefficient 0).
    pub dropped: Vec<String>,
    pub outcome: String,
}

/// `(1/n) * sum(logloss) + lambda * |beta|_1` with unpenalized intercept.
pub fn objective(x: &[Vec<f64>], y: &[bool], intercept: f64, beta: &[f64], lambda: f64) -> f64 {
    let n = y.len() as f64;
    let mut s = 0.0;
    for (r, &yi) in x.iter().zip(y) {
        let eta = intercept + r.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        // log(1 + e^eta) - y * eta, stable
        let sp = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
        s += sp - if yi { eta } else { 0.0 };
    }
    s / n + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Smallest lambda with an all-zero solution.
pub fn lambda_max(x: &[Vec<f64>], y: &[bool]) -> f64 {
    let n = y.len() as f64;
    let ybar = y.iter().filter(|&&v| v).count() as f64 / n;
    let p = x.first().map_or(0, |r| r.len());
    (0..p)
        .map(|j| {
            (x.iter().zip(y).map(|(r, &yi)| r[j] * ((yi as u8 as f64) - ybar)).sum::<f64>() / n).abs()
        })
        .fold(0.0, f64::max)
}

pub fn lambda_grid(lmax: f64, n: usize, min_ratio: f64) -> Vec<f64> {
    if n == 1 {
        return vec![lmax];
    }
    (0..n)
        .map(|k| lmax * min_ratio.powf(k as f64 / (n - 1) as f64))
        .collect()
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Fit at a single lambda from a warm start, by IRLS with cyclic coordinate
/// descent on each quadratic approximation.
pub fn fit_single(
    x: &[Vec<f64>],
    y: &[bool],
    lambda: f64,
    start: (f64, &[f64]),
    opts: &LassoOptions,
) -> Result<(f64, Vec<f64>)> {
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::invalid("lasso needs both outcome classes"));
    }
    if lambda >= lambda_max(x, y) {
        // exact null model; coordinate descent would leave rounding fuzz
        let ybar = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
        return Ok(((ybar / (1.0 - ybar)).ln(), vec![0.0; start.1.len()]));
    }
    fit_cols(&columns(x), y, lambda, start, opts)
}

fn columns(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = x.first().map_or(0, |r| r.len());
    (0..p).map(|j| x.iter().map(|r| r[j]).collect()).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| u * v).sum()
}

fn fit_cols(
    cols: &[Vec<f64>],
    y: &[bool],
    lambda: f64,
    start: (f64, &[f64]),
    opts: &LassoOptions,
) -> Result<(f64, Vec<f64>)> {
    let n = y.len();
    let p = cols.len();
    let nf = n as f64;
    let (mut b0, beta0) = start;
    let mut beta = beta0.to_vec();
    let yv: Vec<f64> = y.iter().map(|&v| v as u8 as f64).collect();
    let linear = |b0: f64, beta: &[f64]| {
        let mut eta = vec![b0; n];
        for (c, &b) in cols.iter().zip(beta) {
            if b != 0.0 {
                eta.iter_mut().zip(c).for_each(|(e, v)| *e += b * v);
            }
        }
        eta
    };
    let mut eta = linear(b0, &beta);
    let mut cycles = 0usize;
    loop {
        // quadratic approximation at the current point
        let prob: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = prob.iter().map(|&q| (q * (1.0 - q)).max(1e-5)).collect();
        let z: Vec<f64> = (0..n).map(|i| eta[i] + (yv[i] - prob[i]) / w[i]).collect();
        let mut r: Vec<f64> = (0..n).map(|i| z[i] - eta[i]).collect();
        let xw: Vec<f64> = cols
            .iter()
            .map(|c| c.iter().zip(&w).map(|(v, wi)| wi * v * v).sum::<f64>() / nf)
            .collect();
        let mut wr: Vec<f64> = r.iter().zip(&w).map(|(ri, wi)| ri * wi).collect();
        let sw: f64 = w.iter().sum();
        let outer_start = (b0, beta.clone());
        // one full sweep, then sweeps over the nonzero set until they settle;
        // done when a full sweep moves nothing
        let mut full = true;
        loop {
            cycles += 1;
            let mut delta: f64 = 0.0;
            let d0 = wr.iter().sum::<f64>() / sw;
            if d0 != 0.0 {
                b0 += d0;
                r.iter_mut().for_each(|ri| *ri -= d0);
                wr.iter_mut().zip(&w).for_each(|(v, wi)| *v -= d0 * wi);
                delta = delta.max(d0.abs());
            }
            for j in 0..p {
                if xw[j] == 0.0 || (!full && beta[j] == 0.0) {
                    continue;
                }
                let c = &cols[j];
                let u = dot(c, &wr) / nf + xw[j] * beta[j];
                let nb = soft(u, lambda) / xw[j];
                let d = nb - beta[j];
                if d != 0.0 {
                    for ((ri, wri), (v, wi)) in r.iter_mut().zip(wr.iter_mut()).zip(c.iter().zip(&w)) {
                        *ri -= d * v;
                        *wri -= d * v * wi;
                    }
                    beta[j] = nb;
                    delta = delta.max(d.abs());
                }
            }
            if cycles >= opts.max_cycles {
                break;
            }
            if delta < opts.tol {
                if full {
                    break;
                }
                full = true;
            } else {
                full = false;
            }
        }
        eta = linear(b0, &beta);
        let change = beta
            .iter()
            .zip(&outer_start.1)
            .map(|(a, b)| (a - b).abs())
            .fold((b0 - outer_start.0).abs(), f64::max);
        if !b0.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("lasso coefficients".into()));
        }
        if change < opts.tol || cycles >= opts.max_cycles {
            if cycles >= opts.max_cycles {
                log::warn!("lasso: cycle limit reached at lambda {lambda}");
            }
            return Ok((b0, beta));
        }
    }
}

fn soft(u: f64, l: f64) -> f64 {
    if u > l {
        u - l
    } else if u < -l {
        u + l
    } else {
        0.0
    }
}

/// Path over `grid` (descending) with warm starts. Stops early once the
/// fit explains 99.9% of the null deviance or, after five values, gains
/// less than 1e-5 of it per step; the returned path may be shorter than
/// `grid`.
pub fn fit_path(x: &[Vec<f64>], y: &[bool], grid: &[f64], opts: &LassoOptions) -> Result<Vec<(f64, Vec<f64>)>> {
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::invalid("lasso needs both outcome classes"));
    }
    let p = x.first().map_or(0, |r| r.len());
    let ybar = y.iter().filter(|&&v| v).count() as f64 / y.len() as f64;
    let mut b0 = (ybar / (1.0 - ybar)).ln();
    let mut beta = vec![0.0; p];
    let null = deviance(x, y, b0, &beta);
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(grid.len());
    let cols = columns(x);
    let lmax = lambda_max(x, y);
    for (k, &l) in grid.iter().enumerate() {
        let (nb0, nb) = if l >= lmax {
            // exact null model; coordinate descent would leave rounding fuzz
            ((ybar / (1.0 - ybar)).ln(), vec![0.0; p])
        } else {
            fit_cols(&cols, y, l, (b0, &beta), opts)?
        };
        b0 = nb0;
        beta = nb;
        out.push((b0, beta.clone()));
        let explained = if null > 0.0 { 1.0 - deviance(x, y, b0, &beta) / null } else { 1.0 };
        if explained >= 0.999 || (k >= 4 && explained - prev < 1e-5) {
            break;
        }
        prev = explained;
    }
    Ok(out)
}

fn deviance(x: &[Vec<f64>], y: &[bool], b0: f64, beta: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(r, &yi)| {
            let eta = b0 + r.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
            let q = sigmoid(eta).clamp(1e-15, 1.0 - 1e-15);
            -2.0 * if yi { q.ln() } else { (1.0 - q).ln() }
        })
        .sum()
}

/// L1-penalized logistic regression with lambda chosen by k-fold CV deviance.
/// `grid = None` uses the default log-spaced grid below the all-zero threshold.
pub fn fit_lasso_logistic(ds: &ProbeDataset, grid: Option<&[f64]>, opts: &LassoOptions) -> Result<ProbeModel> {
    let n = ds.rows();
    let pos = ds.positives();
    if pos == 0 || pos == n {
        return Err(Error::invalid(format!(
            "outcome '{}' has a single class ({pos} of {n} positive)",
            ds.outcome
        )));
    }
    if opts.folds < 2 || opts.folds > n {
        return Err(Error::invalid(format!("folds must be in 2..={n}, got {}", opts.folds)));
    }
    // constant columns carry no information
    let p_all = ds.columns.len();
    let keep: Vec<usize> = (0..p_all)
        .filter(|&j| {
            let v0 = ds.x[0][j];
            ds.x.iter().any(|r| r[j] != v0)
        })
        .collect();
    let dropped: Vec<String> = (0..p_all)
        .filter(|j| !keep.contains(j))
        .map(|j| ds.columns[j].to_string())
        .collect();
    if !dropped.is_empty() {
        log::warn!("dropping constant columns: {}", dropped.join(", "));
    }
    let x: Vec<Vec<f64>> = ds.x.iter().map(|r| keep.iter().map(|&j| r[j]).collect()).collect();
    let y = &ds.y;

    let grid: Vec<f64> = match grid {
        Some(g) => {
            if g.is_empty() || g.iter().any(|l| !l.is_finite() || *l < 0.0) {
                return Err(Error::invalid("lambda grid must be non-empty, finite and >= 0"));
            }
            let mut g = g.to_vec();
            g.sort_by(|a, b| b.partial_cmp(a).unwrap());
            g
        }
        None => lambda_grid(lambda_max(&x, y), opts.n_lambda, opts.lambda_min_ratio),
    };

    let path = fit_path(&x, y, &grid, opts)?;
    let grid = &grid[..path.len()];

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(opts.fold_seed));
    let mut fold_of = vec![0; n];
    for (k, &i) in order.iter().enumerate() {
        fold_of[i] = k % opts.folds;
    }
    let mut dev = vec![0.0; grid.len()];
    for f in 0..opts.folds {
        let (mut xt, mut yt, mut xv, mut yv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for i in 0..n {
            if fold_of[i] == f {
                xv.push(x[i].clone());
                yv.push(y[i]);
            } else {
                xt.push(x[i].clone());
                yt.push(y[i]);
            }
        }
        let tp = yt.iter().filter(|&&v| v).count();
        if tp == 0 || tp == yt.len() {
            return Err(Error::invalid(format!("CV fold {f} leaves a single-class training set")));
        }
        // a fold path that stopped early keeps its last fit
        let fp = fit_path(&xt, &yt, grid, opts)?;
        for (k, d) in dev.iter_mut().enumerate() {
            let (b0, beta) = &fp[k.min(fp.len() - 1)];
            *d += deviance(&xv, &yv, *b0, beta);
        }
    }
    let cv: Vec<(f64, f64)> = grid.iter().zip(&dev).map(|(&l, &d)| (l, d / n as f64)).collect();
    let best = cv
        .iter()
        .enumerate()
        .fold(0, |b, (k, (_, d))| if *d < cv[b].1 { k } else { b });
    let (b0, beta_kept) = path[best].clone();
    let mut coefficients = vec![0.0; p_all];
    for (k, &j) in keep.iter().enumerate() {
        coefficients[j] = beta_kept[k];
    }
    Ok(ProbeModel {
        columns: ds.columns.iter().map(|c| c.to_string()).collect(),
        ids: ds.columns.clone(),
        coefficients,
        intercept: b0,
        lambda: grid[best],
        cv,
        dropped,
        outcome: ds.outcome.clone(),
    })
}

/// `|coef|` sorted descending, ties by lower variable id; entries at or
/// below `threshold` are left out.
pub fn rank_variables(model: &ProbeModel, threshold: f64) -> Vec<(VarId, f64)> {
    let mut v: Vec<(VarId, f64)> = model
        .ids
        .iter()
        .zip(&model.coefficients)
        .map(|(&id, c)| (id, c.abs()))
        .filter(|(_, a)| *a > threshold)
        .collect();
    v.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    v
}
