//! Independent references for the L1-penalized logistic fit.

use rand::Rng;

use super::rng;

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

/// Gradient of the mean log-loss: `(d intercept, d beta)`.
fn loss_grad(x: &[Vec<f64>], y: &[bool], b0: f64, beta: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len() as f64;
    let mut g0 = 0.0;
    let mut g = vec![0.0; beta.len()];
    for (r, &yi) in x.iter().zip(y) {
        let eta = b0 + r.iter().zip(beta).map(|(a, b)| a * b).sum::<f64>();
        let e = sigmoid(eta) - if yi { 1.0 } else { 0.0 };
        g0 += e / n;
        for (gj, xj) in g.iter_mut().zip(r) {
            *gj += e * xj / n;
        }
    }
    (g0, g)
}

/// Accelerated proximal gradient (FISTA) with step `1/L`,
/// `L = |[1 X]|_F^2 / (4n)`.
pub fn proximal_reference(x: &[Vec<f64>], y: &[bool], lambda: f64) -> (f64, Vec<f64>) {
    let n = y.len() as f64;
    let p = x[0].len();
    let l = x.iter().map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>() / (4.0 * n);
    let step = 1.0 / l;
    let mut cur = (0.0, vec![0.0; p]);
    let mut look = cur.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let (g0, g) = loss_grad(x, y, look.0, &look.1);
        let b0 = look.0 - step * g0;
        let beta: Vec<f64> = look
            .1
            .iter()
            .zip(&g)
            .map(|(b, gj)| {
                let u = b - step * gj;
                u.signum() * (u.abs() - step * lambda).max(0.0)
            })
            .collect();
        let tn = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
        let mom = (t - 1.0) / tn;
        let change = beta
            .iter()
            .zip(&cur.1)
            .map(|(a, b)| (a - b).abs())
            .fold((b0 - cur.0).abs(), f64::max);
        look = (
            b0 + mom * (b0 - cur.0),
            beta.iter().zip(&cur.1).map(|(a, b)| a + mom * (a - b)).collect(),
        );
        cur = (b0, beta);
        t = tn;
        if change < 1e-13 {
            break;
        }
    }
    cur
}

/// Largest violation of the subgradient optimality conditions.
pub fn kkt_residual(x: &[Vec<f64>], y: &[bool], b0: f64, beta: &[f64], lambda: f64) -> f64 {
    let (g0, g) = loss_grad(x, y, b0, beta);
    let mut worst = g0.abs();
    for (gj, bj) in g.iter().zip(beta) {
        let score = gj.abs();
        let v = if *bj != 0.0 { (score - lambda).abs() } else { (score - lambda).max(0.0) };
        worst = worst.max(v);
    }
    worst
}

/// Random problem of at most 50 rows and 8 columns.
pub fn random_problem(seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut r = rng(seed);
    let n = r.gen_range(30..=50);
    let p = r.gen_range(3..=8);
    let w: Vec<f64> = (0..p).map(|_| r.gen_range(-2.0..2.0)).collect();
    loop {
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..p).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<bool> = x
            .iter()
            .map(|row| {
                let eta: f64 = row.iter().zip(&w).map(|(a, b)| a * b).sum();
                r.gen::<f64>() < sigmoid(eta)
            })
            .collect();
        let pos = y.iter().filter(|&&v| v).count();
        if pos >= 5 && n - pos >= 5 {
            return (x, y);
        }
    }
}

/// 200 x 10, outcome drawn from logit `4 * x3`.
pub fn planted_problem(seed: u64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut r = rng(seed ^ 0x9e37);
    let x: Vec<Vec<f64>> = (0..200).map(|_| (0..10).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let y = x.iter().map(|row| r.gen::<f64>() < sigmoid(4.0 * row[3])).collect();
    (x, y)
}
