//! ciwGAN / bare WaveGAN training with a WGAN-GP critic.

mod config;
mod latent;
mod loss;
mod model;
mod trainer;

pub use config::{critic_spec, generator_spec, Mode, TrainConfig, KEYS as CONFIG_KEYS};
pub use latent::{latents_tensor, uniform_open, LatentVector, VarId};
pub use loss::{critic_loss, generator_loss, q_loss, CriticLoss, GeneratorLoss};
pub use model::Checkpoint;
pub use trainer::{
    checkpoint_path, metrics_header, resume, train, DrawLog, RealData, StepMetrics, TrainOutcome, Trainer,
};
