//! Learning an identity-based (copying) pattern from raw audio with a
//! categorical-code Wasserstein GAN.
//!
//! The crate is split along the experimental pipeline:
//!
//! - [`corpus`]: deterministic formant-synthesized training corpus of bare and
//!   CV-reduplicated words, with `[s]`-initial items kept bare.
//! - [`nn`]: a small tensor/layer library with hand-written backward passes,
//!   double backward for gradient penalties, Adam and a checkpoint container.
//! - [`gantrain`]: Generator / critic / Q-network training (ciwGAN and bare GAN).
//! - [`annotate`]: automatic acoustic annotation of reduplication and `[s]`.
//! - [`probe`]: Lasso logistic probes, interpolation sweeps, latent forcing and
//!   wug tests.
//! - [`stats`]: Fisher exact test with conditional-MLE odds ratio, exact
//!   binomial test with Clopper-Pearson interval.

pub mod annotate;
pub mod corpus;
pub mod dsp;
pub mod error;
pub mod gantrain;
pub mod kv;
pub mod nn;
pub mod probe;
pub mod stats;
pub mod svg;
pub mod wav;

pub use error::{Error, Result};
