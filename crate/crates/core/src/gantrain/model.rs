use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::latent::{latents_tensor, LatentVector};
use super::loss::argmax;
use super::trainer::get_network;
use crate::kv::KvFile;
use crate::nn::{Container, Network, Tensor};
use crate::{Error, Result};

const GEN_BATCH: usize = 32;

/// Trained networks loaded from a checkpoint, for inference only.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub step: u64,
    pub generator: Network<f32>,
    pub critic: Network<f32>,
    pub q: Option<Network<f32>>,
}

impl Checkpoint {
    pub fn from_container(c: &Container) -> Result<Self> {
        let config = TrainConfig::from_kv(&KvFile::parse(&c.str("config")?, "checkpoint config")?)?;
        let step = c.u64s("step")?.first().copied().unwrap_or(0);
        Ok(Checkpoint {
            config,
            step,
            generator: get_network(c, "generator")?,
            critic: get_network(c, "critic")?,
            q: c.has("spec.q").then(|| get_network(c, "q")).transpose()?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Checkpoint::from_container(&Container::load(path)?)
    }

    pub fn latent_dim(&self) -> usize {
        self.generator.spec().input_shape().0
    }

    pub fn n_codes(&self) -> usize {
        self.config.n_codes
    }

    pub fn n_z(&self) -> usize {
        self.latent_dim() - self.n_codes()
    }

    pub fn slice_len(&self) -> usize {
        self.generator.spec().output_shape().1
    }

    /// Pure function of the checkpoint and the latents.
    pub fn generate(&self, latents: &[LatentVector]) -> Result<Vec<Vec<f32>>> {
        let width = self.latent_dim();
        let len = self.slice_len();
        let mut out = Vec::with_capacity(latents.len());
        for chunk in latents.chunks(GEN_BATCH) {
            let z = latents_tensor::<f32>(chunk, width)?;
            let y = self.generator.predict(&z)?;
            out.extend(y.data().chunks_exact(len).map(|w| w.to_vec()));
        }
        Ok(out)
    }

    /// Q-network argmax for each waveform.
    pub fn q_predict(&self, waves: &[Vec<f32>]) -> Result<Vec<usize>> {
        let q = self
            .q
            .as_ref()
            .ok_or_else(|| Error::Config("checkpoint has no Q-network (baregan mode)".into()))?;
        let len = self.slice_len();
        let mut out = Vec::with_capacity(waves.len());
        for chunk in waves.chunks(GEN_BATCH) {
            let mut data = Vec::with_capacity(chunk.len() * len);
            for w in chunk {
                if w.len() != len {
                    return Err(Error::Shape(format!("waveform of {} samples, expected {len}", w.len())));
                }
                data.extend_from_slice(w);
            }
            let logits = q.predict(&Tensor::new(vec![chunk.len(), 1, len], data)?)?;
            let n = self.n_codes();
            out.extend(
                logits
                    .data()
                    .chunks_exact(n)
                    .map(|r| argmax(&r.iter().map(|&v| v as f64).collect::<Vec<_>>())),
            );
        }
        Ok(out)
    }

    /// Q-retrieval accuracy on `n` fresh one-hot generations: `(correct, n)`.
    pub fn q_accuracy(&self, n: usize, seed: u64) -> Result<(usize, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lat = Vec::with_capacity(n);
        let mut levels = Vec::with_capacity(n);
        for _ in 0..n {
            let (l, k) = LatentVector::sample(&mut rng, self.n_codes(), self.n_z());
            lat.push(l);
            levels.push(k.ok_or_else(|| Error::Config("Q accuracy needs codes".into()))?);
        }
        let pred = self.q_predict(&self.generate(&lat)?)?;
        Ok((pred.iter().zip(&levels).filter(|(a, b)| a == b).count(), n))
    }
}
