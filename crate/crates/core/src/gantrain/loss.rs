use rand::{Rng, RngCore};

use crate::nn::{accumulate, Network, Scalar, Tensor};
use crate::{Error, Result};

/// Critic objective and its parameter gradient.
#[derive(Debug, Clone)]
pub struct CriticLoss<T> {
    /// `mean D(fake) - mean D(real) + gp`.
    pub loss: f64,
    pub gp: f64,
    /// Interpolation weights drawn for the penalty, one per sample.
    pub eps: Vec<f64>,
    pub grad_norms: Vec<f64>,
    pub grads: Vec<Tensor<T>>,
}

fn batch_of<T: Scalar>(x: &Tensor<T>) -> usize {
    x.shape().first().copied().unwrap_or(0)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// WGAN-GP critic loss. `rng` supplies the interpolation weights and the
/// critic's phase-shuffle draws.
pub fn critic_loss<T: Scalar>(
    critic: &Network<T>,
    real: &Tensor<T>,
    fake: &Tensor<T>,
    lambda: f64,
    rng: &mut dyn RngCore,
) -> Result<CriticLoss<T>> {
    if real.shape() != fake.shape() {
        return Err(Error::Shape(format!(
            "real batch {:?} and fake batch {:?} differ",
            real.shape(),
            fake.shape()
        )));
    }
    let b = batch_of(real);
    if b == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let per = real.len() / b;
    let eps: Vec<f64> = (0..b).map(|_| rng.gen::<f64>()).collect();
    let mut mixed = Vec::with_capacity(real.len());
    for (s, &e) in eps.iter().enumerate() {
        let e = T::of(e);
        let r = &real.data()[s * per..(s + 1) * per];
        let f = &fake.data()[s * per..(s + 1) * per];
        mixed.extend(r.iter().zip(f).map(|(&r, &f)| e * r + (T::one() - e) * f));
    }
    let mixed = Tensor::new(real.shape().to_vec(), mixed)?;

    // real and fake share one pass
    let mut shape = real.shape().to_vec();
    shape[0] = 2 * b;
    let mut both = real.data().to_vec();
    both.extend_from_slice(fake.data());
    let both = Tensor::new(shape, both)?;
    let (out, cache) = critic.forward(&both, Some(&mut *rng))?;
    if out.shape()[1..] != [1, 1] {
        return Err(Error::Shape("critic must have a single output".into()));
    }
    let inv = 1.0 / b as f64;
    let d_real: f64 = out.data()[..b].iter().map(|v| v.as_f64()).sum::<f64>() * inv;
    let d_fake: f64 = out.data()[b..].iter().map(|v| v.as_f64()).sum::<f64>() * inv;
    let og = Tensor::from_fn(vec![2 * b, 1, 1], |i| T::of(if i < b { -inv } else { inv }));
    let (mut grads, _) = critic.backward(&cache, &og)?;

    let pen = critic.gradient_penalty(&mixed, lambda, Some(&mut *rng))?;
    accumulate(&mut grads, &pen.param_grads, T::one());
    let loss = finite(d_fake - d_real + pen.value, "critic loss")?;
    Ok(CriticLoss {
        loss,
        gp: pen.value,
        eps,
        grad_norms: pen.grad_norms,
        grads,
    })
}

/// Mean cross-entropy between `softmax(logits)` and `targets` (rows summing
/// to one). Logits may be `[B, n]` or `[B, n, 1]`. Returns the loss, its
/// gradient with respect to the logits and the number of rows whose argmax
/// matches the target's argmax.
pub fn q_loss<T: Scalar>(targets: &Tensor<T>, logits: &Tensor<T>) -> Result<(f64, Tensor<T>, usize)> {
    let (b, n) = match (targets.shape(), logits.shape()) {
        ([tb, tn], [lb, ln] | [lb, ln, 1]) if tb == lb && tn == ln => (*tb, *tn),
        (t, l) => {
            return Err(Error::Shape(format!(
                "code targets {t:?} do not match logits {l:?}"
            )))
        }
    };
    if b == 0 || n == 0 {
        return Err(Error::Shape("empty code batch".into()));
    }
    let mut loss = 0.0;
    let mut grad = vec![T::zero(); b * n];
    let mut correct = 0;
    for s in 0..b {
        let z: Vec<f64> = logits.data()[s * n..(s + 1) * n].iter().map(|v| v.as_f64()).collect();
        let t: Vec<f64> = targets.data()[s * n..(s + 1) * n].iter().map(|v| v.as_f64()).collect();
        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        let tsum: f64 = t.iter().sum();
        for k in 0..n {
            let logp = z[k] - lse;
            loss -= t[k] * logp;
            grad[s * n + k] = T::of((tsum * logp.exp() - t[k]) / b as f64);
        }
        if argmax(&z) == argmax(&t) {
            correct += 1;
        }
    }
    let loss = finite(loss / b as f64, "q loss")?;
    Ok((loss, Tensor::new(logits.shape().to_vec(), grad)?, correct))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Generator objective and gradients.
#[derive(Debug, Clone)]
pub struct GeneratorLoss<T> {
    /// `-mean D(G(z)) + q_weight * q_loss`.
    pub loss: f64,
    pub adversarial: f64,
    pub q_loss: Option<f64>,
    pub q_correct: usize,
    pub g_grads: Vec<Tensor<T>>,
    /// Gradient of `q_weight * q_loss` with respect to the Q-network.
    pub q_grads: Option<Vec<Tensor<T>>>,
}

/// Generator (+Q) loss on latents `z` (`[B, latent, 1]`). `codes` holds the
/// one-hot targets when a Q-network is present.
#[allow(clippy::too_many_arguments)]
pub fn generator_loss<T: Scalar>(
    generator: &Network<T>,
    critic: &Network<T>,
    q: Option<&Network<T>>,
    z: &Tensor<T>,
    codes: Option<&Tensor<T>>,
    q_weight: f64,
    rng: &mut dyn RngCore,
) -> Result<GeneratorLoss<T>> {
    let b = batch_of(z);
    if b == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let (fake, gcache) = generator.forward(z, None)?;
    let (d_out, dcache) = critic.forward(&fake, Some(&mut *rng))?;
    let inv = 1.0 / b as f64;
    let adversarial = -d_out.data().iter().map(|v| v.as_f64()).sum::<f64>() * inv;
    let og = Tensor::from_fn(d_out.shape().to_vec(), |_| T::of(-inv));
    let (_, mut gx) = critic.backward(&dcache, &og)?;

    let (q_loss_v, q_correct, q_grads) = match (q, codes) {
        (Some(qn), Some(codes)) => {
            let (logits, qcache) = qn.forward(&fake, Some(&mut *rng))?;
            let (l, dl, correct) = q_loss(codes, &logits)?;
            let dl = dl.map(|v| v * T::of(q_weight));
            let (qg, qx) = qn.backward(&qcache, &dl)?;
            accumulate(std::slice::from_mut(&mut gx), std::slice::from_ref(&qx), T::one());
            (Some(l), correct, Some(qg))
        }
        (None, None) => (None, 0, None),
        _ => {
            return Err(Error::Config(
                "Q-network and code targets must be given together".into(),
            ))
        }
    };
    let (g_grads, _) = generator.backward(&gcache, &gx)?;
    let loss = finite(adversarial + q_weight * q_loss_v.unwrap_or(0.0), "generator loss")?;
    Ok(GeneratorLoss {
        loss,
        adversarial,
        q_loss: q_loss_v,
        q_correct,
        g_grads,
        q_grads,
    })
}
