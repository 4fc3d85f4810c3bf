use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};

use crate::nn::{Scalar, Tensor};
use crate::{Error, Result};

/// Name of one latent coordinate: `c1`, `c2`, ... for codes and `z0`, `z1`,
/// ... for noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarId {
    /// 1-based code slot.
    Code(usize),
    /// 0-based noise index.
    Z(usize),
}

impl VarId {
    /// Position in the flat latent vector `[codes..., noise...]`.
    pub fn position(self, n_codes: usize, n_z: usize) -> Result<usize> {
        match self {
            VarId::Code(i) if i >= 1 && i <= n_codes => Ok(i - 1),
            VarId::Z(j) if j < n_z => Ok(n_codes + j),
            _ => Err(Error::invalid(format!(
                "variable {self} does not exist ({n_codes} codes, {n_z} noise variables)"
            ))),
        }
    }

    pub fn at(position: usize, n_codes: usize) -> Self {
        if position < n_codes {
            VarId::Code(position + 1)
        } else {
            VarId::Z(position - n_codes)
        }
    }
}

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarId::Code(i) => write!(f, "c{i}"),
            VarId::Z(j) => write!(f, "z{j}"),
        }
    }
}

impl FromStr for VarId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::invalid(format!("bad variable id '{s}' (expected c<k> or z<k>)"));
        let (head, num) = s.split_at(s.char_indices().nth(1).map_or(s.len(), |(i, _)| i));
        let n: usize = num.trim_start_matches('_').parse().map_err(|_| bad())?;
        match head {
            "c" if n >= 1 => Ok(VarId::Code(n)),
            "z" => Ok(VarId::Z(n)),
            _ => Err(bad()),
        }
    }
}

/// One latent input: code slots followed by noise.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentVector {
    pub code: Vec<f64>,
    pub noise: Vec<f64>,
}

impl LatentVector {
    pub fn to_vec(&self) -> Vec<f64> {
        self.code.iter().chain(&self.noise).copied().collect()
    }

    pub fn from_slice(v: &[f64], n_codes: usize) -> Result<Self> {
        if v.len() < n_codes {
            return Err(Error::Shape(format!("latent of width {} has fewer than {n_codes} codes", v.len())));
        }
        Ok(LatentVector {
            code: v[..n_codes].to_vec(),
            noise: v[n_codes..].to_vec(),
        })
    }

    pub fn width(&self) -> usize {
        self.code.len() + self.noise.len()
    }

    pub fn set(&mut self, id: VarId, value: f64) -> Result<()> {
        let pos = id.position(self.code.len(), self.noise.len())?;
        if pos < self.code.len() {
            self.code[pos] = value;
        } else {
            self.noise[pos - self.code.len()] = value;
        }
        Ok(())
    }

    pub fn get(&self, id: VarId) -> Result<f64> {
        let pos = id.position(self.code.len(), self.noise.len())?;
        Ok(self.to_vec()[pos])
    }

    /// Random training latent: uniform noise on (-1, 1) and a one-hot code
    /// at a uniformly drawn level. Returns the level (`None` without codes).
    pub fn sample(rng: &mut dyn RngCore, n_codes: usize, n_z: usize) -> (Self, Option<usize>) {
        let level = (n_codes > 0).then(|| rng.gen_range(0..n_codes));
        let mut code = vec![0.0; n_codes];
        if let Some(k) = level {
            code[k] = 1.0;
        }
        let noise = (0..n_z).map(|_| uniform_open(rng)).collect();
        (LatentVector { code, noise }, level)
    }
}

/// Uniform on the open interval (-1, 1).
pub fn uniform_open(rng: &mut dyn RngCore) -> f64 {
    loop {
        let v: f64 = rng.gen_range(-1.0..1.0);
        if v != -1.0 {
            return v;
        }
    }
}

/// Stacks latents into a `[batch, width, 1]` tensor.
pub fn latents_tensor<T: Scalar>(latents: &[LatentVector], width: usize) -> Result<Tensor<T>> {
    let mut data = Vec::with_capacity(latents.len() * width);
    for (i, l) in latents.iter().enumerate() {
        if l.width() != width {
            return Err(Error::Shape(format!("latent {i} has width {}, expected {width}", l.width())));
        }
        data.extend(l.to_vec().into_iter().map(T::of));
    }
    Tensor::new(vec![latents.len(), width, 1], data)
}
