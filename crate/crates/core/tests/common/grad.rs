//! Finite-difference gradient cases shared by the unit-level suites and the
//! acceptance run.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use redupgan::gantrain::{critic_loss, critic_spec, generator_loss, generator_spec, q_loss, Mode, TrainConfig};
use redupgan::nn::{LayerSpec, Network, NetworkSpec, Tensor};

use super::{fd_check, flatten, random_tensor, rng, sample_coords, unflatten, with_params, FdReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Dense,
    Conv,
    ConvT,
    Relu,
    Leaky,
    Tanh,
    Reshape,
    Shuffle,
}

pub const ALL_KINDS: [Kind; 8] = [
    Kind::Dense,
    Kind::Conv,
    Kind::ConvT,
    Kind::Relu,
    Kind::Leaky,
    Kind::Tanh,
    Kind::Reshape,
    Kind::Shuffle,
];

const PER_TENSOR: usize = 24;

/// Random init plus jitter so no bias is exactly zero (zero biases put dead
/// ReLU units exactly on their kink).
pub fn init(spec: &NetworkSpec, r: &mut ChaCha8Rng) -> Network<f64> {
    let net = Network::<f64>::init(spec.clone(), r);
    let params = net
        .params()
        .iter()
        .map(|p| {
            let v = p.data().iter().map(|v| v + r.gen_range(-0.1..0.1)).collect();
            Tensor::new(p.shape().to_vec(), v).unwrap()
        })
        .collect();
    Network::new(spec.clone(), params).unwrap()
}

/// Random single-layer network of the given kind.
pub fn layer_net(kind: Kind, r: &mut ChaCha8Rng) -> (NetworkSpec, usize) {
    let c = r.gen_range(1..=3);
    let l = r.gen_range(3..=12);
    let batch = r.gen_range(1..=3);
    let layer = match kind {
        Kind::Dense => LayerSpec::Dense {
            inputs: c * l,
            outputs: r.gen_range(1..=5),
        },
        Kind::Conv => LayerSpec::Conv1d {
            in_channels: c,
            out_channels: r.gen_range(1..=3),
            kernel_len: r.gen_range(1..=7),
            stride: r.gen_range(1..=3),
        },
        Kind::ConvT => LayerSpec::ConvTranspose1d {
            in_channels: c,
            out_channels: r.gen_range(1..=3),
            kernel_len: r.gen_range(1..=7),
            stride: r.gen_range(1..=3),
        },
        Kind::Relu => LayerSpec::Relu,
        Kind::Leaky => LayerSpec::LeakyRelu { slope: 0.2 },
        Kind::Tanh => LayerSpec::Tanh,
        Kind::Reshape => LayerSpec::Reshape {
            channels: 1,
            length: c * l,
        },
        Kind::Shuffle => LayerSpec::PhaseShuffle {
            radius: r.gen_range(0..l.min(3)),
        },
    };
    (NetworkSpec::new((c, l), vec![layer]).unwrap(), batch)
}

/// Gradient check of `sum(w * net(x))` with respect to parameters and input.
pub fn network_case(spec: &NetworkSpec, batch: usize, seed: u64) -> FdReport {
    let mut r = rng(seed);
    let params = init(spec, &mut r).params().to_vec();
    let (c, l) = spec.input_shape();
    let x = random_tensor(vec![batch, c, l], 1.0, &mut r);
    let (oc, ol) = spec.output_shape();
    let n_out = (batch * oc * ol) as f64;
    let w = random_tensor(vec![batch, oc, ol], 1.0 / n_out.sqrt(), &mut r);
    let shuffle_seed = r.gen::<u64>();

    let eval = |net: &Network<f64>, x: &Tensor<f64>| -> f64 {
        let mut sr = rng(shuffle_seed);
        let (y, _) = net.forward(x, Some(&mut sr)).unwrap();
        y.dot(&w)
    };
    let net = Network::new(spec.clone(), params.clone()).unwrap();
    let mut sr = rng(shuffle_seed);
    let (_, cache) = net.forward(&x, Some(&mut sr)).unwrap();
    let (pg, xg) = net.backward(&cache, &w).unwrap();

    let flat = flatten(&params);
    let coords = sample_coords(&params, PER_TENSOR, seed ^ 1);
    let rep_p = fd_check(&flat, &flatten(&pg), &coords, |p| eval(&with_params(spec, &params, p), &x));
    let xs = std::slice::from_ref(&x);
    let coords = sample_coords(xs, PER_TENSOR, seed ^ 2);
    let rep_x = fd_check(x.data(), xg.data(), &coords, |v| {
        eval(&net, &Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap())
    });
    rep_p.merge(rep_x)
}

pub fn layer_case(kind: Kind, seed: u64) -> FdReport {
    let mut r = rng(seed);
    let (spec, batch) = layer_net(kind, &mut r);
    network_case(&spec, batch, seed)
}

/// Tiny full-architecture config (slice 32, 3 layers, stride 2).
pub fn tiny_config(seed: u64) -> TrainConfig {
    let mut r = rng(seed ^ 0x7157);
    TrainConfig {
        slice_len: 32,
        stride: 2,
        layers: 3,
        kernel_len: r.gen_range(3..=6),
        model_dim: r.gen_range(1..=2),
        latent_dim: 6,
        n_codes: 2,
        shuffle_radius: r.gen_range(0..=1),
        mode: Mode::Ciwgan,
        ..TrainConfig::desk()
    }
}

/// Generator network alone.
pub fn generator_case(seed: u64) -> FdReport {
    let cfg = tiny_config(seed);
    network_case(&generator_spec(&cfg).unwrap(), 2, seed)
}

/// Full critic loss (Wasserstein estimate + gradient penalty) with respect
/// to the critic parameters.
pub fn critic_case(seed: u64) -> FdReport {
    let cfg = tiny_config(seed);
    let spec = critic_spec(&cfg, 1).unwrap();
    let mut r = rng(seed);
    let critic = init(&spec, &mut r);
    let params = critic.params().to_vec();
    let real = random_tensor(vec![3, 1, cfg.slice_len], 0.8, &mut r);
    let fake = random_tensor(vec![3, 1, cfg.slice_len], 0.8, &mut r);
    let lr_seed = r.gen::<u64>();
    let loss = |net: &Network<f64>| {
        let mut lr = rng(lr_seed);
        critic_loss(net, &real, &fake, 10.0, &mut lr).unwrap()
    };
    let base = loss(&critic);
    let coords = sample_coords(&params, PER_TENSOR, seed ^ 3);
    fd_check(&flatten(&params), &flatten(&base.grads), &coords, |p| {
        loss(&with_params(&spec, &params, p)).loss
    })
}

/// `|dD/dx|` from the penalty against a finite-difference input gradient.
pub fn penalty_norm_case(seed: u64) -> f64 {
    let cfg = TrainConfig {
        shuffle_radius: 0,
        ..tiny_config(seed)
    };
    let spec = critic_spec(&cfg, 1).unwrap();
    let mut r = rng(seed);
    let critic = init(&spec, &mut r);
    let x = random_tensor(vec![1, 1, cfg.slice_len], 0.8, &mut r);
    let pen = critic.gradient_penalty(&x, 1.0, None).unwrap();
    let d = |v: &[f64]| {
        critic
            .predict(&Tensor::new(x.shape().to_vec(), v.to_vec()).unwrap())
            .unwrap()
            .data()[0]
    };
    let mut buf = x.data().to_vec();
    let mut sq = 0.0;
    for i in 0..buf.len() {
        let x0 = buf[i];
        buf[i] = x0 + super::H;
        let p = d(&buf);
        buf[i] = x0 - super::H;
        let m = d(&buf);
        buf[i] = x0;
        sq += ((p - m) / (2.0 * super::H)).powi(2);
    }
    super::rel_err(pen.grad_norms[0], sq.sqrt())
}

fn one_hot(levels: &[usize], n: usize) -> Tensor<f64> {
    Tensor::from_fn(vec![levels.len(), n], |i| if levels[i / n] == i % n { 1.0 } else { 0.0 })
}

/// Q-network cross-entropy with respect to the Q parameters.
pub fn q_case(seed: u64) -> FdReport {
    let cfg = tiny_config(seed);
    let spec = critic_spec(&cfg, cfg.n_codes).unwrap();
    let mut r = rng(seed);
    let q = init(&spec, &mut r);
    let params = q.params().to_vec();
    let x = random_tensor(vec![3, 1, cfg.slice_len], 0.8, &mut r);
    let codes = one_hot(&[0, 1, 1], 2);
    let s = r.gen::<u64>();
    let eval = |net: &Network<f64>| {
        let mut sr = rng(s);
        let (y, c) = net.forward(&x, Some(&mut sr)).unwrap();
        (q_loss(&codes, &y).unwrap(), c)
    };
    let ((_, dl, _), cache) = eval(&q);
    let (g, _) = q.backward(&cache, &dl).unwrap();
    let coords = sample_coords(&params, PER_TENSOR, seed ^ 4);
    fd_check(&flatten(&params), &flatten(&g), &coords, |p| eval(&with_params(&spec, &params, p)).0 .0)
}

/// Generator objective `-mean D(G(z)) + q_weight * CE(Q(G(z)))` with respect
/// to both generator and Q parameters.
pub fn generator_loss_case(seed: u64) -> FdReport {
    let cfg = tiny_config(seed);
    let gs = generator_spec(&cfg).unwrap();
    let ds = critic_spec(&cfg, 1).unwrap();
    let qs = critic_spec(&cfg, cfg.n_codes).unwrap();
    let mut r = rng(seed);
    let g = init(&gs, &mut r);
    let d = init(&ds, &mut r);
    let q = init(&qs, &mut r);
    let z = random_tensor(vec![2, cfg.latent_dim, 1], 1.0, &mut r);
    let codes = one_hot(&[1, 0], 2);
    let s = r.gen::<u64>();
    let qw = 0.7;
    let eval = |g: &Network<f64>, q: &Network<f64>| {
        let mut sr = ChaCha8Rng::seed_from_u64(s);
        generator_loss(g, &d, Some(q), &z, Some(&codes), qw, &mut sr).unwrap()
    };
    let base = eval(&g, &q);
    let gp = g.params().to_vec();
    let qp = q.params().to_vec();
    let rep_g = fd_check(&flatten(&gp), &flatten(&base.g_grads), &sample_coords(&gp, PER_TENSOR, seed ^ 5), |p| {
        eval(&with_params(&gs, &gp, p), &q).loss
    });
    let qg = base.q_grads.unwrap();
    let rep_q = fd_check(&flatten(&qp), &flatten(&qg), &sample_coords(&qp, PER_TENSOR, seed ^ 6), |p| {
        eval(&g, &Network::new(qs.clone(), unflatten(&qp, p)).unwrap()).loss
    });
    rep_g.merge(rep_q)
}
