use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::kv::KvFile;
use crate::nn::{AdamConfig, LayerSpec, NetworkSpec};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Generator + critic + Q-network with categorical codes.
    Ciwgan,
    /// Generator + critic only; every latent variable is noise.
    Baregan,
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ciwgan" => Ok(Mode::Ciwgan),
            "baregan" => Ok(Mode::Baregan),
            _ => Err(Error::Config(format!("unknown mode '{s}' (expected ciwgan or baregan)"))),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ciwgan => "ciwgan",
            Mode::Baregan => "baregan",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: Mode,
    pub steps: u64,
    pub batch_size: usize,
    pub n_critic: usize,
    pub lambda_gp: f64,
    pub q_weight: f64,
    pub adam: AdamConfig,
    pub checkpoint_every: u64,
    pub seed: u64,
    pub slice_len: usize,
    pub model_dim: usize,
    pub latent_dim: usize,
    pub n_codes: usize,
    pub kernel_len: usize,
    pub stride: usize,
    pub layers: usize,
    pub shuffle_radius: usize,
    pub leaky_slope: f64,
}

pub const KEYS: [&str; 21] = [
    "mode",
    "steps",
    "batch_size",
    "n_critic",
    "lambda_gp",
    "q_weight",
    "alpha",
    "beta1",
    "beta2",
    "eps",
    "checkpoint_every",
    "seed",
    "slice_len",
    "model_dim",
    "latent_dim",
    "n_codes",
    "kernel_len",
    "stride",
    "layers",
    "shuffle_radius",
    "leaky_slope",
];

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::desk()
    }
}

impl TrainConfig {
    /// CPU-sized run: 4096-sample slices, model_dim 16, batch 16.
    pub fn desk() -> Self {
        TrainConfig {
            mode: Mode::Ciwgan,
            steps: 2000,
            batch_size: 16,
            n_critic: 5,
            lambda_gp: 10.0,
            q_weight: 1.0,
            adam: AdamConfig::default(),
            checkpoint_every: 500,
            seed: 0,
            slice_len: 4096,
            model_dim: 16,
            latent_dim: 100,
            n_codes: 2,
            kernel_len: 25,
            stride: 4,
            layers: 5,
            shuffle_radius: 2,
            leaky_slope: 0.2,
        }
    }

    /// Full-size WaveGAN geometry.
    pub fn paper() -> Self {
        TrainConfig {
            steps: 15920,
            batch_size: 64,
            checkpoint_every: 1000,
            slice_len: 16384,
            model_dim: 64,
            ..TrainConfig::desk()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(TrainConfig::desk()),
            "paper" => Ok(TrainConfig::paper()),
            _ => Err(Error::Config(format!("unknown train preset '{name}' (expected desk or paper)"))),
        }
    }

    pub fn n_z(&self) -> usize {
        self.latent_dim - self.n_codes
    }

    /// Applies the keys of `kv` on top of `self`. In baregan mode `n_codes`
    /// defaults to 0.
    pub fn apply_kv(mut self, kv: &KvFile) -> Result<Self> {
        kv.reject_unknown(&KEYS)?;
        macro_rules! take {
            ($key:literal, $slot:expr) => {
                if let Some(v) = kv.get($key)? {
                    $slot = v;
                }
            };
        }
        take!("mode", self.mode);
        take!("steps", self.steps);
        take!("batch_size", self.batch_size);
        take!("n_critic", self.n_critic);
        take!("lambda_gp", self.lambda_gp);
        take!("q_weight", self.q_weight);
        take!("alpha", self.adam.alpha);
        take!("beta1", self.adam.beta1);
        take!("beta2", self.adam.beta2);
        take!("eps", self.adam.eps);
        take!("checkpoint_every", self.checkpoint_every);
        take!("seed", self.seed);
        take!("slice_len", self.slice_len);
        take!("model_dim", self.model_dim);
        take!("latent_dim", self.latent_dim);
        take!("kernel_len", self.kernel_len);
        take!("stride", self.stride);
        take!("layers", self.layers);
        take!("shuffle_radius", self.shuffle_radius);
        take!("leaky_slope", self.leaky_slope);
        match kv.get("n_codes")? {
            Some(n) => self.n_codes = n,
            None if self.mode == Mode::Baregan => self.n_codes = 0,
            None => {}
        }
        self.validate()?;
        Ok(self)
    }

    pub fn from_kv(kv: &KvFile) -> Result<Self> {
        TrainConfig::desk().apply_kv(kv)
    }

    pub fn load(path: &Path) -> Result<Self> {
        TrainConfig::from_kv(&KvFile::read(path)?)
    }

    pub fn to_kv(&self) -> KvFile {
        let mut kv = KvFile::default();
        kv.set("mode", self.mode);
        kv.set("steps", self.steps);
        kv.set("batch_size", self.batch_size);
        kv.set("n_critic", self.n_critic);
        kv.set("lambda_gp", self.lambda_gp);
        kv.set("q_weight", self.q_weight);
        kv.set("alpha", self.adam.alpha);
        kv.set("beta1", self.adam.beta1);
        kv.set("beta2", self.adam.beta2);
        kv.set("eps", self.adam.eps);
        kv.set("checkpoint_every", self.checkpoint_every);
        kv.set("seed", self.seed);
        kv.set("slice_len", self.slice_len);
        kv.set("model_dim", self.model_dim);
        kv.set("latent_dim", self.latent_dim);
        kv.set("n_codes", self.n_codes);
        kv.set("kernel_len", self.kernel_len);
        kv.set("stride", self.stride);
        kv.set("layers", self.layers);
        kv.set("shuffle_radius", self.shuffle_radius);
        kv.set("leaky_slope", self.leaky_slope);
        kv
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self.mode {
            Mode::Baregan if self.n_codes != 0 => return bad("baregan mode requires n_codes = 0".into()),
            Mode::Ciwgan if self.n_codes < 2 => return bad("ciwgan mode requires n_codes >= 2".into()),
            _ => {}
        }
        if self.latent_dim <= self.n_codes {
            return bad(format!("latent_dim {} must exceed n_codes {}", self.latent_dim, self.n_codes));
        }
        if self.batch_size == 0 || self.n_critic == 0 || self.model_dim == 0 || self.layers == 0 {
            return bad("batch_size, n_critic, model_dim and layers must be positive".into());
        }
        if self.stride < 1 || self.kernel_len < 1 {
            return bad("stride and kernel_len must be positive".into());
        }
        let up = self.stride.checked_pow(self.layers as u32).unwrap_or(usize::MAX);
        if self.slice_len == 0 || self.slice_len % up != 0 {
            return bad(format!(
                "slice_len {} must be a positive multiple of stride^layers = {up}",
                self.slice_len
            ));
        }
        let finite = [self.lambda_gp, self.q_weight, self.adam.alpha, self.adam.eps, self.leaky_slope];
        if finite.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return bad("lambda_gp, q_weight, alpha, eps and leaky_slope must be finite and >= 0".into());
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)".into());
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be positive".into());
        }
        critic_spec(self, 1)?;
        Ok(())
    }

    fn channels(&self, i: usize) -> usize {
        self.model_dim << i
    }

    fn base_len(&self) -> usize {
        self.slice_len / self.stride.pow(self.layers as u32)
    }
}

/// Dense -> reshape -> ReLU -> `layers` transposed convs (ReLU between,
/// tanh at the end). Output `(1, slice_len)`.
pub fn generator_spec(cfg: &TrainConfig) -> Result<NetworkSpec> {
    let n = cfg.layers;
    let l0 = cfg.base_len();
    let top = cfg.channels(n - 1);
    let mut layers = vec![
        LayerSpec::Dense {
            inputs: cfg.latent_dim,
            outputs: top * l0,
        },
        LayerSpec::Reshape {
            channels: top,
            length: l0,
        },
        LayerSpec::Relu,
    ];
    for i in 0..n {
        let cin = cfg.channels(n - 1 - i);
        let cout = if i + 1 == n { 1 } else { cfg.channels(n - 2 - i) };
        layers.push(LayerSpec::ConvTranspose1d {
            in_channels: cin,
            out_channels: cout,
            kernel_len: cfg.kernel_len,
            stride: cfg.stride,
        });
        layers.push(if i + 1 == n { LayerSpec::Tanh } else { LayerSpec::Relu });
    }
    let spec = NetworkSpec::new((cfg.latent_dim, 1), layers)?;
    if spec.output_shape() != (1, cfg.slice_len) {
        return Err(Error::Shape(format!(
            "generator output {:?} != (1, {})",
            spec.output_shape(),
            cfg.slice_len
        )));
    }
    Ok(spec)
}

/// Strided convs with leaky ReLU and phase shuffle, then a dense head with
/// `outputs` units. Used for the critic (1) and the Q-network (`n_codes`).
pub fn critic_spec(cfg: &TrainConfig, outputs: usize) -> Result<NetworkSpec> {
    let n = cfg.layers;
    let mut layers = Vec::new();
    for i in 0..n {
        let cin = if i == 0 { 1 } else { cfg.channels(i - 1) };
        layers.push(LayerSpec::Conv1d {
            in_channels: cin,
            out_channels: cfg.channels(i),
            kernel_len: cfg.kernel_len,
            stride: cfg.stride,
        });
        layers.push(LayerSpec::LeakyRelu { slope: cfg.leaky_slope });
        if i + 1 < n && cfg.shuffle_radius > 0 {
            layers.push(LayerSpec::PhaseShuffle {
                radius: cfg.shuffle_radius,
            });
        }
    }
    layers.push(LayerSpec::Dense {
        inputs: cfg.channels(n - 1) * cfg.base_len(),
        outputs,
    });
    NetworkSpec::new((1, cfg.slice_len), layers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_reaches_slice_len() {
        for cfg in [TrainConfig::desk(), TrainConfig::paper()] {
            let g = generator_spec(&cfg).unwrap();
            assert_eq!(g.output_shape(), (1, cfg.slice_len));
            assert_eq!(g.layers().last(), Some(&LayerSpec::Tanh));
            let d = critic_spec(&cfg, 1).unwrap();
            assert_eq!(d.output_shape(), (1, 1));
            assert_eq!(critic_spec(&cfg, 2).unwrap().output_shape(), (2, 1));
        }
    }

    #[test]
    fn kv_round_trip_and_unknown_keys() {
        let cfg = TrainConfig {
            seed: 17,
            q_weight: 0.3,
            ..TrainConfig::desk()
        };
        let back = TrainConfig::from_kv(&cfg.to_kv()).unwrap();
        assert_eq!(back, cfg);
        let kv = KvFile::parse("steps = 5\nbogus = 1\n", "t.cfg").unwrap();
        let e = TrainConfig::from_kv(&kv).unwrap_err().to_string();
        assert!(e.contains("bogus"), "{e}");
    }

    #[test]
    fn baregan_has_no_codes() {
        let kv = KvFile::parse("mode = baregan\n", "t").unwrap();
        let cfg = TrainConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.n_codes, 0);
        assert_eq!(cfg.n_z(), 100);
        let kv = KvFile::parse("mode = baregan\nn_codes = 2\n", "t").unwrap();
        assert!(TrainConfig::from_kv(&kv).is_err());
    }

    #[test]
    fn bad_geometry_is_rejected() {
        let cfg = TrainConfig {
            slice_len: 4000,
            ..TrainConfig::desk()
        };
        assert!(cfg.validate().is_err());
    }
}
