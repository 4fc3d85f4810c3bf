use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            alpha: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Moments for one parameter list.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, params: &[Tensor<T>]) -> Self {
        let z = |p: &Tensor<T>| Tensor::zeros(p.shape().to_vec());
        AdamState {
            config,
            step: 0,
            m: params.iter().map(z).collect(),
            v: params.iter().map(z).collect(),
        }
    }

    /// One bias-corrected update, in place.
    pub fn update(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(format!(
                "adam: {} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != g.shape() || p.shape() != self.m[i].shape() {
                return Err(Error::Shape(format!(
                    "adam: tensor {i} param {:?} grad {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            g.check_finite("adam gradient")?;
        }
        self.step += 1;
        let AdamConfig {
            alpha,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        let (b1, b2) = (T::of(beta1), T::of(beta2));
        let (a1, a2) = (T::of(1.0 - beta1), T::of(1.0 - beta2));
        let (c1, c2, lr, e) = (T::of(c1), T::of(c2), T::of(alpha), T::of(eps));
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let it = p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut().iter_mut().zip(v.data_mut().iter_mut()));
            for ((x, &gi), (mi, vi)) in it {
                *mi = b1 * *mi + a1 * gi;
                *vi = b2 * *vi + a2 * gi * gi;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *x = *x - lr * mh / (vh.sqrt() + e);
            }
        }
        Ok(())
    }
}
