use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{critic_spec, generator_spec, Mode, TrainConfig};
use super::latent::{latents_tensor, LatentVector};
use super::loss::{critic_loss, generator_loss};
use crate::corpus::CorpusManifest;
use crate::kv::KvFile;
use crate::nn::{AdamState, Container, Network, NetworkSpec, Tensor};
use crate::{Error, Result};

/// Training audio as one flat `[n, slice_len]` buffer.
#[derive(Debug, Clone)]
pub struct RealData {
    slice_len: usize,
    data: Vec<f32>,
}

impl RealData {
    pub fn new(slice_len: usize, data: Vec<f32>) -> Result<Self> {
        if slice_len == 0 || data.is_empty() || data.len() % slice_len != 0 {
            return Err(Error::Shape(format!(
                "{} samples do not split into slices of {slice_len}",
                data.len()
            )));
        }
        Ok(RealData { slice_len, data })
    }

    /// Loads every corpus item; lengths must equal `slice_len`.
    pub fn from_corpus(corpus: &CorpusManifest, slice_len: usize) -> Result<Self> {
        if corpus.slice_len != slice_len {
            return Err(Error::Config(format!(
                "corpus slice_len {} does not match training slice_len {slice_len}",
                corpus.slice_len
            )));
        }
        corpus.verify_audio()?;
        let mut data = Vec::with_capacity(corpus.items.len() * slice_len);
        for item in &corpus.items {
            let w = corpus.load_audio(item)?;
            if w.len() != slice_len {
                return Err(Error::Config(format!(
                    "{} has {} samples, expected {slice_len}",
                    corpus.audio_path(item).display(),
                    w.len()
                )));
            }
            data.extend_from_slice(&w);
        }
        RealData::new(slice_len, data)
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.slice_len
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn slice_len(&self) -> usize {
        self.slice_len
    }

    fn batch(&self, idx: &[usize]) -> Tensor<f32> {
        let l = self.slice_len;
        let mut out = Vec::with_capacity(idx.len() * l);
        for &i in idx {
            out.extend_from_slice(&self.data[i * l..(i + 1) * l]);
        }
        Tensor::new(vec![idx.len(), 1, l], out).expect("batch shape")
    }
}

/// Losses of one generator step (critic values averaged over its updates).
#[derive(Debug, Clone, PartialEq)]
pub struct StepMetrics {
    pub step: u64,
    pub epoch: f64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub gp: f64,
    pub q_loss: Option<f64>,
    pub q_acc: Option<f64>,
}

/// Random draws recorded when [`Trainer::record_draws`] is on.
#[derive(Debug, Clone, Default)]
pub struct DrawLog {
    pub codes: Vec<usize>,
    pub eps: Vec<f64>,
}

pub struct Trainer {
    cfg: TrainConfig,
    pub generator: Network<f32>,
    pub critic: Network<f32>,
    pub q: Option<Network<f32>>,
    adam_g: AdamState<f32>,
    adam_d: AdamState<f32>,
    adam_q: Option<AdamState<f32>>,
    rng: ChaCha8Rng,
    step: u64,
    real: RealData,
    draws: Option<DrawLog>,
}

fn rng_words(rng: &ChaCha8Rng) -> Vec<u64> {
    let seed = rng.get_seed();
    let mut w: Vec<u64> = seed.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap())).collect();
    w.push(rng.get_stream());
    let pos = rng.get_word_pos();
    w.push(pos as u64);
    w.push((pos >> 64) as u64);
    w
}

fn rng_from_words(w: &[u64]) -> Result<ChaCha8Rng> {
    if w.len() != 7 {
        return Err(Error::Format("rng state must have 7 words".into()));
    }
    let mut seed = [0u8; 32];
    for (i, v) in w[..4].iter().enumerate() {
        seed[i * 8..i * 8 + 8].copy_from_slice(&v.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(w[4]);
    rng.set_word_pos(w[5] as u128 | (w[6] as u128) << 64);
    Ok(rng)
}

pub(crate) fn put_network(c: &mut Container, prefix: &str, net: &Network<f32>) -> Result<()> {
    c.put_str(format!("spec.{prefix}"), &serde_json::to_string(net.spec())?);
    for ((name, _), p) in net.spec().param_shapes().iter().zip(net.params()) {
        c.put_tensor(format!("{prefix}/{name}"), p);
    }
    Ok(())
}

pub(crate) fn get_network(c: &Container, prefix: &str) -> Result<Network<f32>> {
    let spec: NetworkSpec = serde_json::from_str(&c.str(&format!("spec.{prefix}"))?)?;
    let params = spec
        .param_shapes()
        .iter()
        .map(|(name, _)| c.tensor::<f32>(&format!("{prefix}/{name}")))
        .collect::<Result<Vec<_>>>()?;
    Network::new(spec, params)
}

fn put_adam(c: &mut Container, prefix: &str, spec: &NetworkSpec, st: &AdamState<f32>) {
    c.put_u64s(format!("adam.{prefix}.step"), &[st.step]);
    for ((name, _), (m, v)) in spec.param_shapes().iter().zip(st.m.iter().zip(&st.v)) {
        c.put_tensor(format!("adam.{prefix}.m/{name}"), m);
        c.put_tensor(format!("adam.{prefix}.v/{name}"), v);
    }
}

fn get_adam(c: &Container, prefix: &str, net: &Network<f32>, cfg: &TrainConfig) -> Result<AdamState<f32>> {
    let mut st = AdamState::new(cfg.adam, net.params());
    st.step = first(c.u64s(&format!("adam.{prefix}.step"))?)?;
    for (i, (name, _)) in net.spec().param_shapes().iter().enumerate() {
        st.m[i] = c.tensor(&format!("adam.{prefix}.m/{name}"))?;
        st.v[i] = c.tensor(&format!("adam.{prefix}.v/{name}"))?;
    }
    Ok(st)
}

fn first(v: &[u64]) -> Result<u64> {
    v.first().copied().ok_or_else(|| Error::Format("empty u64 entry".into()))
}

impl Trainer {
    /// Fresh run with the standard architecture.
    pub fn new(cfg: TrainConfig, real: RealData) -> Result<Self> {
        cfg.validate()?;
        let q = (cfg.mode == Mode::Ciwgan).then(|| critic_spec(&cfg, cfg.n_codes)).transpose()?;
        Trainer::with_specs(cfg.clone(), generator_spec(&cfg)?, critic_spec(&cfg, 1)?, q, real)
    }

    /// Fresh run with arbitrary networks (the generator maps
    /// `[B, latent_dim, 1]` to the critic's input shape).
    pub fn with_specs(
        cfg: TrainConfig,
        g: NetworkSpec,
        d: NetworkSpec,
        q: Option<NetworkSpec>,
        real: RealData,
    ) -> Result<Self> {
        if g.input_shape() != (cfg.latent_dim, 1) {
            return Err(Error::Shape(format!("generator input must be ({}, 1)", cfg.latent_dim)));
        }
        if g.output_shape() != d.input_shape() || g.output_shape() != (1, real.slice_len) {
            return Err(Error::Config(format!(
                "generator output {:?}, critic input {:?} and data slices (1, {}) disagree",
                g.output_shape(),
                d.input_shape(),
                real.slice_len
            )));
        }
        if d.output_shape() != (1, 1) {
            return Err(Error::Shape("critic must have a single output".into()));
        }
        match (&q, cfg.mode) {
            (Some(qs), Mode::Ciwgan) if qs.output_shape() == (cfg.n_codes, 1) && qs.input_shape() == d.input_shape() => {}
            (None, Mode::Baregan) => {}
            _ => return Err(Error::Config("Q-network must exist exactly in ciwgan mode with n_codes outputs".into())),
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let generator = Network::init(g, &mut rng);
        let critic = Network::init(d, &mut rng);
        let q = q.map(|s| Network::init(s, &mut rng));
        let adam_g = AdamState::new(cfg.adam, generator.params());
        let adam_d = AdamState::new(cfg.adam, critic.params());
        let adam_q = q.as_ref().map(|n| AdamState::new(cfg.adam, n.params()));
        Ok(Trainer {
            cfg,
            generator,
            critic,
            q,
            adam_g,
            adam_d,
            adam_q,
            rng,
            step: 0,
            real,
            draws: None,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Starts recording code and interpolation draws.
    pub fn record_draws(&mut self) {
        self.draws = Some(DrawLog::default());
    }

    pub fn draws(&self) -> Option<&DrawLog> {
        self.draws.as_ref()
    }

    pub fn epoch(&self) -> f64 {
        (self.step as f64 * self.cfg.batch_size as f64 * self.cfg.n_critic as f64) / self.real.len() as f64
    }

    fn sample_latents(&mut self) -> Result<(Tensor<f32>, Option<Tensor<f32>>)> {
        let (nc, nz, b) = (self.cfg.n_codes, self.cfg.n_z(), self.cfg.batch_size);
        let mut lat = Vec::with_capacity(b);
        let mut codes = Vec::with_capacity(b * nc);
        for _ in 0..b {
            let (l, k) = LatentVector::sample(&mut self.rng, nc, nz);
            if let Some(k) = k {
                if let Some(d) = self.draws.as_mut() {
                    d.codes.push(k);
                }
            }
            codes.extend(l.code.iter().map(|&v| v as f32));
            lat.push(l);
        }
        let z = latents_tensor(&lat, self.cfg.latent_dim)?;
        let codes = (nc > 0).then(|| Tensor::new(vec![b, nc], codes)).transpose()?;
        Ok((z, codes))
    }

    /// One generator update preceded by `n_critic` critic updates.
    pub fn step(&mut self) -> Result<StepMetrics> {
        let b = self.cfg.batch_size;
        let n = self.real.len();
        let mut d_sum = 0.0;
        let mut gp_sum = 0.0;
        for _ in 0..self.cfg.n_critic {
            let idx: Vec<usize> = (0..b).map(|_| self.rng.gen_range(0..n)).collect();
            let real = self.real.batch(&idx);
            let (z, _) = self.sample_latents()?;
            let fake = self.generator.predict(&z)?;
            let cl = critic_loss(&self.critic, &real, &fake, self.cfg.lambda_gp, &mut self.rng)?;
            if let Some(d) = self.draws.as_mut() {
                d.eps.extend_from_slice(&cl.eps);
            }
            self.adam_d.update(self.critic.params_mut(), &cl.grads)?;
            d_sum += cl.loss;
            gp_sum += cl.gp;
        }
        let (z, codes) = self.sample_latents()?;
        let gl = generator_loss(
            &self.generator,
            &self.critic,
            self.q.as_ref(),
            &z,
            codes.as_ref(),
            self.cfg.q_weight,
            &mut self.rng,
        )?;
        self.adam_g.update(self.generator.params_mut(), &gl.g_grads)?;
        if let (Some(q), Some(st), Some(g)) = (self.q.as_mut(), self.adam_q.as_mut(), gl.q_grads.as_ref()) {
            st.update(q.params_mut(), g)?;
        }
        self.step += 1;
        let k = self.cfg.n_critic as f64;
        Ok(StepMetrics {
            step: self.step,
            epoch: self.epoch(),
            d_loss: d_sum / k,
            g_loss: gl.loss,
            gp: gp_sum / k,
            q_loss: gl.q_loss,
            q_acc: gl.q_loss.map(|_| gl.q_correct as f64 / b as f64),
        })
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new();
        c.put_u64s("step", &[self.step]);
        c.put_str("config", &self.cfg.to_kv().render());
        c.put_u64s("rng", &rng_words(&self.rng));
        c.put_u64s("corpus_size", &[self.real.len() as u64]);
        put_network(&mut c, "generator", &self.generator)?;
        put_network(&mut c, "critic", &self.critic)?;
        put_adam(&mut c, "generator", self.generator.spec(), &self.adam_g);
        put_adam(&mut c, "critic", self.critic.spec(), &self.adam_d);
        if let (Some(q), Some(st)) = (&self.q, &self.adam_q) {
            put_network(&mut c, "q", q)?;
            put_adam(&mut c, "q", q.spec(), st);
        }
        Ok(c)
    }

    /// Restores a run; the data must be the corpus it was trained on.
    pub fn from_container(c: &Container, real: RealData) -> Result<Self> {
        let cfg = TrainConfig::from_kv(&KvFile::parse(&c.str("config")?, "checkpoint config")?)?;
        let size = first(c.u64s("corpus_size")?)?;
        if size != real.len() as u64 {
            return Err(Error::Config(format!(
                "checkpoint was trained on {size} items, corpus has {}",
                real.len()
            )));
        }
        let generator = get_network(c, "generator")?;
        let critic = get_network(c, "critic")?;
        let q = c.has("spec.q").then(|| get_network(c, "q")).transpose()?;
        let adam_g = get_adam(c, "generator", &generator, &cfg)?;
        let adam_d = get_adam(c, "critic", &critic, &cfg)?;
        let adam_q = q.as_ref().map(|n| get_adam(c, "q", n, &cfg)).transpose()?;
        Ok(Trainer {
            step: first(c.u64s("step")?)?,
            rng: rng_from_words(c.u64s("rng")?)?,
            cfg,
            generator,
            critic,
            q,
            adam_g,
            adam_d,
            adam_q,
            real,
            draws: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_container()?.save(path)
    }

    /// Runs to `until` steps, writing `metrics.csv` and checkpoints
    /// `step_NNNNNN.rdg` into `out_dir`. A non-finite loss writes
    /// `diagnostic.rdg` and returns the error.
    pub fn run(&mut self, until: u64, out_dir: &Path, mut on_step: impl FnMut(&StepMetrics)) -> Result<TrainOutcome> {
        fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
        let metrics_path = out_dir.join("metrics.csv");
        let mut log = MetricsLog::open(&metrics_path, self.cfg.mode, self.step)?;
        let mut last = None;
        while self.step < until {
            let m = match self.step() {
                Ok(m) => m,
                Err(e @ Error::NonFinite(_)) => {
                    let diag = out_dir.join("diagnostic.rdg");
                    self.save(&diag)?;
                    log::error!("non-finite value at step {}: diagnostic checkpoint {}", self.step, diag.display());
                    return Err(e);
                }
                Err(e) => return Err(e),
            };
            log.write(&m)?;
            on_step(&m);
            if self.step % self.cfg.checkpoint_every == 0 || self.step == until {
                let p = checkpoint_path(out_dir, self.step);
                self.save(&p)?;
                last = Some(p);
            }
        }
        let checkpoint = match last {
            Some(p) => p,
            None => {
                let p = checkpoint_path(out_dir, self.step);
                self.save(&p)?;
                p
            }
        };
        Ok(TrainOutcome {
            checkpoint,
            metrics: metrics_path,
            steps: self.step,
        })
    }
}

pub fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("step_{step:06}.rdg"))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub steps: u64,
}

pub fn metrics_header(mode: Mode) -> &'static str {
    match mode {
        Mode::Ciwgan => "step,epoch,d_loss,g_loss,gp,q_loss,q_acc",
        Mode::Baregan => "step,epoch,d_loss,g_loss,gp",
    }
}

struct MetricsLog {
    file: fs::File,
    path: PathBuf,
}

impl MetricsLog {
    /// Creates the log, or on resume keeps the rows up to `step`.
    fn open(path: &Path, mode: Mode, step: u64) -> Result<Self> {
        let header = metrics_header(mode);
        let mut keep = format!("{header}\n");
        if step > 0 {
            if let Ok(old) = fs::read_to_string(path) {
                for line in old.lines().skip(1) {
                    let s: Option<u64> = line.split(',').next().and_then(|v| v.parse().ok());
                    if s.is_some_and(|s| s <= step) {
                        keep.push_str(line);
                        keep.push('\n');
                    }
                }
            }
        }
        fs::write(path, keep).map_err(|e| Error::io(path, e))?;
        let file = fs::OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(MetricsLog {
            file,
            path: path.to_path_buf(),
        })
    }

    fn write(&mut self, m: &StepMetrics) -> Result<()> {
        let mut line = format!("{},{},{},{},{}", m.step, m.epoch, m.d_loss, m.g_loss, m.gp);
        if let (Some(l), Some(a)) = (m.q_loss, m.q_acc) {
            line.push_str(&format!(",{l},{a}"));
        }
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))
    }
}

/// Trains from scratch on `corpus` and writes everything into `out_dir`.
pub fn train(corpus: &CorpusManifest, cfg: &TrainConfig, out_dir: &Path) -> Result<TrainOutcome> {
    let real = RealData::from_corpus(corpus, cfg.slice_len)?;
    let mut t = Trainer::new(cfg.clone(), real)?;
    t.run(cfg.steps, out_dir, |m| {
        if m.step % 50 == 0 {
            log::info!("step {} d {:.4} g {:.4} gp {:.4} q {:?}", m.step, m.d_loss, m.g_loss, m.gp, m.q_acc);
        }
    })
}

/// Continues a run from `checkpoint` up to `until` steps (default: the
/// configured step count).
pub fn resume(checkpoint: &Path, corpus: &CorpusManifest, out_dir: &Path, until: Option<u64>) -> Result<TrainOutcome> {
    let c = Container::load(checkpoint)?;
    let cfg = TrainConfig::from_kv(&KvFile::parse(&c.str("config")?, "checkpoint config")?)?;
    let real = RealData::from_corpus(corpus, cfg.slice_len)?;
    let mut t = Trainer::from_container(&c, real)?;
    // the saved config records the target, so an extended run matches a
    // straight one
    t.cfg.steps = until.unwrap_or(cfg.steps);
    t.run(t.cfg.steps, out_dir, |_| {})
}
