mod common;

use rand::Rng;
use redupgan::gantrain::{
    metrics_header, q_loss, Checkpoint, Mode, RealData, TrainConfig, Trainer,
};
use redupgan::nn::{phase_shuffle, AdamConfig, AdamState, Container, LayerSpec, NetworkSpec, Tensor};
use redupgan::Error;

fn tiny(mode: Mode, seed: u64) -> TrainConfig {
    TrainConfig {
        mode,
        n_codes: if mode == Mode::Ciwgan { 2 } else { 0 },
        batch_size: 4,
        n_critic: 2,
        checkpoint_every: 5,
        seed,
        ..common::grad::tiny_config(seed)
    }
}

fn tiny_data(n: usize, seed: u64) -> RealData {
    let mut r = common::rng(seed);
    RealData::new(32, (0..n * 32).map(|_| r.gen_range(-0.5f32..0.5)).collect()).unwrap()
}

fn bytes(t: &Trainer) -> Vec<u8> {
    t.to_container().unwrap().to_bytes().unwrap()
}

#[test]
fn toy_generator_converges_to_constant_data() {
    let cfg = TrainConfig {
        mode: Mode::Baregan,
        n_codes: 0,
        latent_dim: 4,
        batch_size: 16,
        n_critic: 5,
        adam: AdamConfig {
            alpha: 1e-3,
            ..AdamConfig::default()
        },
        seed: 1,
        ..TrainConfig::desk()
    };
    let g = NetworkSpec::new((4, 1), vec![LayerSpec::Dense { inputs: 4, outputs: 1 }]).unwrap();
    let d = NetworkSpec::new(
        (1, 1),
        vec![
            LayerSpec::Dense { inputs: 1, outputs: 16 },
            LayerSpec::LeakyRelu { slope: 0.2 },
            LayerSpec::Dense { inputs: 16, outputs: 1 },
        ],
    )
    .unwrap();
    let real = RealData::new(1, vec![0.5; 64]).unwrap();
    let mut t = Trainer::with_specs(cfg, g, d, None, real).unwrap();
    for _ in 0..2000 {
        t.step().unwrap();
    }
    let mut r = common::rng(2);
    let z = Tensor::from_fn(vec![256, 4, 1], |_| r.gen_range(-1.0f32..1.0));
    let y = t.generator.predict(&z).unwrap();
    let mean = y.data().iter().map(|&v| v as f64).sum::<f64>() / 256.0;
    assert!((mean - 0.5).abs() < 0.1, "generated mean {mean}");
}

#[test]
fn resume_matches_uninterrupted_run() {
    let cfg = tiny(Mode::Ciwgan, 3);
    let mut full = Trainer::new(cfg.clone(), tiny_data(12, 0)).unwrap();
    for _ in 0..7 {
        full.step().unwrap();
    }
    let saved = full.to_container().unwrap();
    for _ in 0..10 {
        full.step().unwrap();
    }
    let reloaded = Container::from_bytes(&saved.to_bytes().unwrap()).unwrap();
    let mut resumed = Trainer::from_container(&reloaded, tiny_data(12, 0)).unwrap();
    assert_eq!(resumed.step_count(), 7);
    for _ in 0..10 {
        resumed.step().unwrap();
    }
    assert!(bytes(&full) == bytes(&resumed), "resumed run diverged");
}

#[test]
fn run_resumes_on_disk_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let cfg = tiny(Mode::Ciwgan, 8);
    let mut t = Trainer::new(cfg.clone(), tiny_data(10, 1)).unwrap();
    let out = t.run(12, &a, |_| {}).unwrap();
    assert_eq!(out.steps, 12);

    let mut t = Trainer::new(cfg, tiny_data(10, 1)).unwrap();
    t.run(5, &b, |_| {}).unwrap();
    let c = Container::load(&b.join("step_000005.rdg")).unwrap();
    let mut t = Trainer::from_container(&c, tiny_data(10, 1)).unwrap();
    t.run(12, &b, |_| {}).unwrap();

    for f in ["step_000010.rdg", "step_000012.rdg", "metrics.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
    let rows = std::fs::read_to_string(a.join("metrics.csv")).unwrap().lines().count();
    assert_eq!(rows, 13);
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let run = || {
        let mut t = Trainer::new(tiny(Mode::Ciwgan, 5), tiny_data(8, 2)).unwrap();
        for _ in 0..6 {
            t.step().unwrap();
        }
        bytes(&t)
    };
    assert!(run() == run());
    let mut other = Trainer::new(tiny(Mode::Ciwgan, 6), tiny_data(8, 2)).unwrap();
    other.step().unwrap();
    assert!(bytes(&other) != run());
}

#[test]
fn baregan_has_no_q_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny(Mode::Baregan, 2), tiny_data(8, 3)).unwrap();
    assert!(t.q.is_none());
    let m = t.step().unwrap();
    assert!(m.q_loss.is_none() && m.q_acc.is_none());
    t.run(3, tmp.path(), |_| {}).unwrap();
    let csv = std::fs::read_to_string(tmp.path().join("metrics.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(header, metrics_header(Mode::Baregan));
    assert!(!header.contains("q_"));
    assert!(metrics_header(Mode::Ciwgan).contains("q_loss"));
    let ck = Checkpoint::load(&tmp.path().join("step_000003.rdg")).unwrap();
    assert!(ck.q.is_none());
    assert!(ck.q_predict(&[vec![0.0; 32]]).is_err());
}

#[test]
fn code_and_interpolation_draws_are_uniform() {
    let mut t = Trainer::new(tiny(Mode::Ciwgan, 9), tiny_data(8, 4)).unwrap();
    t.record_draws();
    for _ in 0..150 {
        t.step().unwrap();
    }
    let d = t.draws().unwrap();
    let mut codes = [0u64; 2];
    for &c in &d.codes {
        codes[c] += 1;
    }
    let p = common::chi2_uniform(&codes);
    assert!(p > 1e-3, "code counts {codes:?} p {p}");
    let mut bins = [0u64; 10];
    for &e in &d.eps {
        assert!((0.0..=1.0).contains(&e));
        bins[((e * 10.0) as usize).min(9)] += 1;
    }
    let p = common::chi2_uniform(&bins);
    assert!(p > 1e-3, "eps bins {bins:?} p {p}");
}

#[test]
fn q_loss_matches_softmax_cross_entropy() {
    let mut r = common::rng(4);
    let (b, n) = (5, 3);
    let logits = common::random_tensor(vec![b, n], 3.0, &mut r);
    let levels: Vec<usize> = (0..b).map(|_| r.gen_range(0..n)).collect();
    let targets = Tensor::from_fn(vec![b, n], |i| if levels[i / n] == i % n { 1.0 } else { 0.0 });
    let (loss, grad, correct) = q_loss(&targets, &logits).unwrap();
    let mut want = 0.0;
    let mut want_correct = 0;
    for s in 0..b {
        let z = &logits.data()[s * n..(s + 1) * n];
        let denom: f64 = z.iter().map(|v| v.exp()).sum();
        want -= (z[levels[s]].exp() / denom).ln();
        for k in 0..n {
            let g = (z[k].exp() / denom - if k == levels[s] { 1.0 } else { 0.0 }) / b as f64;
            assert!((grad.data()[s * n + k] - g).abs() < 1e-12);
        }
        let best = (0..n).max_by(|&a, &c| z[a].partial_cmp(&z[c]).unwrap()).unwrap();
        want_correct += usize::from(best == levels[s]);
    }
    assert!((loss - want / b as f64).abs() < 1e-12);
    assert_eq!(correct, want_correct);
    assert!(matches!(q_loss(&targets, &Tensor::<f64>::zeros(vec![b, 2])), Err(Error::Shape(_))));
}

#[test]
fn adam_matches_scalar_reference() {
    let cfg = AdamConfig {
        alpha: 0.01,
        beta1: 0.5,
        beta2: 0.9,
        eps: 1e-8,
    };
    let mut p = vec![Tensor::new(vec![2], vec![1.0f64, -2.0]).unwrap()];
    let mut st = AdamState::new(cfg, &p);
    let (mut x, mut m, mut v) = ([1.0f64, -2.0], [0.0f64; 2], [0.0f64; 2]);
    for t in 1..=10 {
        let g: Vec<f64> = x.iter().map(|xi| 2.0 * xi + 0.3 * t as f64).collect();
        st.update(&mut p, &[Tensor::new(vec![2], g.clone()).unwrap()]).unwrap();
        for i in 0..2 {
            m[i] = 0.5 * m[i] + 0.5 * g[i];
            v[i] = 0.9 * v[i] + 0.1 * g[i] * g[i];
            let mh = m[i] / (1.0 - 0.5f64.powi(t));
            let vh = v[i] / (1.0 - 0.9f64.powi(t));
            x[i] -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        for i in 0..2 {
            assert!((p[0].data()[i] - x[i]).abs() < 1e-10, "step {t}");
        }
    }
    let bad = Tensor::new(vec![2], vec![f64::NAN, 0.0]).unwrap();
    assert!(matches!(st.update(&mut p, &[bad]), Err(Error::NonFinite(_))));
}

#[test]
fn phase_shuffle_offsets_are_uniform() {
    let mut r = common::rng(12);
    let x = common::random_tensor(vec![100, 1, 8], 1.0, &mut r);
    let mut counts = [0u64; 5];
    for _ in 0..100 {
        let (y, shifts) = phase_shuffle(&x, 2, &mut r).unwrap();
        assert_eq!(y.shape(), x.shape());
        for s in shifts {
            counts[(s + 2) as usize] += 1;
        }
    }
    assert_eq!(counts.iter().sum::<u64>(), 10_000);
    let p = common::chi2_uniform(&counts);
    assert!(p > 1e-3, "{counts:?} p {p}");
    let (y, s) = phase_shuffle(&x, 0, &mut r).unwrap();
    assert!(s.iter().all(|&v| v == 0));
    assert_eq!(y, x);
}

#[test]
fn checkpoint_round_trip_and_corruption() {
    let tmp = tempfile::tempdir().unwrap();
    let mut t = Trainer::new(tiny(Mode::Ciwgan, 4), tiny_data(8, 5)).unwrap();
    t.step().unwrap();
    let path = tmp.path().join("c.rdg");
    t.save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    assert_eq!(ck.step, 1);
    assert_eq!(ck.generator.params(), t.generator.params());
    assert_eq!(&ck.config, t.config());

    let mut raw = std::fs::read(&path).unwrap();
    let mid = raw.len() / 2;
    raw[mid] ^= 0x40;
    assert!(matches!(Container::from_bytes(&raw), Err(Error::Format(_))));
    assert!(Container::from_bytes(&raw[..10]).is_err());
    assert!(matches!(Checkpoint::load(&tmp.path().join("none.rdg")), Err(Error::MissingFiles(_))));

    // stored precision is checked
    let c = Container::load(&path).unwrap();
    assert!(c.tensor::<f64>("generator/0.dense.weight").is_err());
}

#[test]
fn wrong_corpus_size_is_rejected_on_resume() {
    let t = Trainer::new(tiny(Mode::Ciwgan, 4), tiny_data(8, 5)).unwrap();
    let c = t.to_container().unwrap();
    assert!(matches!(Trainer::from_container(&c, tiny_data(9, 5)), Err(Error::Config(_))));
}

#[test]
fn generated_audio_is_a_pure_function_of_latents() {
    let t = Trainer::new(tiny(Mode::Ciwgan, 4), tiny_data(8, 5)).unwrap();
    let ck = Checkpoint::from_container(&t.to_container().unwrap()).unwrap();
    let mut r = common::rng(1);
    let lat: Vec<_> = (0..40)
        .map(|_| redupgan::gantrain::LatentVector::sample(&mut r, 2, ck.n_z()).0)
        .collect();
    let a = ck.generate(&lat).unwrap();
    let b = ck.generate(&lat[..1]).unwrap();
    assert_eq!(a.len(), 40);
    assert_eq!(a[0], b[0]);
    assert!(a.iter().all(|w| w.len() == 32 && w.iter().all(|v| v.abs() <= 1.0)));
}
