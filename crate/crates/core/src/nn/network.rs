use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::layer::{
    draw_shifts, layer_backward_input, layer_forward, layer_jvp, layer_weight_grad, LayerAux, LayerSpec,
};
use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// Ordered layers plus the per-sample input shape `(channels, length)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct NetworkSpec {
    input: (usize, usize),
    layers: Vec<LayerSpec>,
    shapes: Vec<(usize, usize)>,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    input: (usize, usize),
    layers: Vec<LayerSpec>,
}

impl TryFrom<RawSpec> for NetworkSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        NetworkSpec::new(r.input, r.layers)
    }
}

impl From<NetworkSpec> for RawSpec {
    fn from(s: NetworkSpec) -> Self {
        RawSpec {
            input: s.input,
            layers: s.layers,
        }
    }
}

impl NetworkSpec {
    /// Checks that the shapes chain through every layer.
    pub fn new(input: (usize, usize), layers: Vec<LayerSpec>) -> Result<Self> {
        if input.0 == 0 || input.1 == 0 {
            return Err(Error::Shape(format!("empty input shape {input:?}")));
        }
        let mut shapes = vec![input];
        for (i, l) in layers.iter().enumerate() {
            let next = l
                .output_shape(*shapes.last().unwrap())
                .map_err(|e| Error::Shape(format!("layer {i}: {e}")))?;
            shapes.push(next);
        }
        Ok(NetworkSpec { input, layers, shapes })
    }

    pub fn input_shape(&self) -> (usize, usize) {
        self.input
    }

    pub fn output_shape(&self) -> (usize, usize) {
        *self.shapes.last().unwrap()
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    /// Input shape of layer `i`; `shapes()[layers.len()]` is the output.
    pub fn shapes(&self) -> &[(usize, usize)] {
        &self.shapes
    }

    /// `(name, shape)` of every parameter tensor in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            for (shape, what) in l.param_shapes().into_iter().zip(["weight", "bias"]) {
                out.push((format!("{i}.{}.{what}", l.name()), shape));
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }

    /// Index of the first parameter tensor of each layer.
    fn param_offsets(&self) -> Vec<Option<usize>> {
        let mut next = 0;
        self.layers
            .iter()
            .map(|l| {
                if l.is_affine() {
                    next += 2;
                    Some(next - 2)
                } else {
                    None
                }
            })
            .collect()
    }

    /// Centered uniform init scaled by fan-in: `sqrt(6/fan_in)` ahead of a
    /// rectifier, `sqrt(3/fan_in)` otherwise. Biases start at zero.
    pub fn init_params<T: Scalar>(&self, rng: &mut dyn RngCore) -> Vec<Tensor<T>> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            if !l.is_affine() {
                continue;
            }
            let rect = self.layers[i + 1..]
                .iter()
                .find(|n| !matches!(n, LayerSpec::Reshape { .. } | LayerSpec::PhaseShuffle { .. }))
                .is_some_and(|n| matches!(n, LayerSpec::Relu | LayerSpec::LeakyRelu { .. }));
            let gain = if rect { 6.0 } else { 3.0 };
            let a = (gain / l.fan_in().max(1) as f64).sqrt();
            let shapes = l.param_shapes();
            out.push(Tensor::from_fn(shapes[0].clone(), |_| T::of(rng.gen_range(-a..a))));
            out.push(Tensor::zeros(shapes[1].clone()));
        }
        out
    }
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

/// A spec together with its parameters.
#[derive(Debug)]
pub struct Network<T> {
    spec: NetworkSpec,
    params: Vec<Tensor<T>>,
    offsets: Vec<Option<usize>>,
    id: u64,
    generation: u64,
}

impl<T: Scalar> Clone for Network<T> {
    fn clone(&self) -> Self {
        Network {
            spec: self.spec.clone(),
            params: self.params.clone(),
            offsets: self.offsets.clone(),
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        }
    }
}

/// Activations kept by [`Network::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Cache<T> {
    net_id: u64,
    generation: u64,
    batch: usize,
    acts: Vec<Vec<T>>,
    aux: Vec<LayerAux>,
}

impl<T> Cache<T> {
    pub fn batch(&self) -> usize {
        self.batch
    }
}

/// Result of [`Network::gradient_penalty`].
#[derive(Debug, Clone)]
pub struct Penalty<T> {
    /// `lambda * mean((|g_b| - 1)^2)`.
    pub value: f64,
    /// Per-sample `|dD/dx|`.
    pub grad_norms: Vec<f64>,
    /// Gradient of `value` with respect to every parameter tensor.
    pub param_grads: Vec<Tensor<T>>,
    /// Per-sample output of the network at `x`.
    pub output: Tensor<T>,
}

impl<T: Scalar> Network<T> {
    pub fn new(spec: NetworkSpec, params: Vec<Tensor<T>>) -> Result<Self> {
        let shapes = spec.param_shapes();
        if shapes.len() != params.len() {
            return Err(Error::Shape(format!(
                "network needs {} parameter tensors, got {}",
                shapes.len(),
                params.len()
            )));
        }
        for ((name, s), p) in shapes.iter().zip(&params) {
            if p.shape() != s.as_slice() {
                return Err(Error::Shape(format!("{name}: expected {s:?}, got {:?}", p.shape())));
            }
        }
        let offsets = spec.param_offsets();
        Ok(Network {
            spec,
            params,
            offsets,
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            generation: 0,
        })
    }

    pub fn init(spec: NetworkSpec, rng: &mut dyn RngCore) -> Self {
        let params = spec.init_params(rng);
        Network::new(spec, params).expect("init matches spec")
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn params(&self) -> &[Tensor<T>] {
        &self.params
    }

    /// Mutable access; invalidates outstanding caches.
    pub fn params_mut(&mut self) -> &mut [Tensor<T>] {
        self.generation += 1;
        &mut self.params
    }

    pub fn zero_grads(&self) -> Vec<Tensor<T>> {
        self.params.iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect()
    }

    fn layer_params(&self, i: usize) -> &[Tensor<T>] {
        match self.offsets[i] {
            Some(o) => &self.params[o..o + 2],
            None => &[],
        }
    }

    fn check_input(&self, x: &Tensor<T>) -> Result<usize> {
        let (c, l) = self.spec.input;
        match x.shape() {
            [b, cc, ll] if *cc == c && *ll == l => Ok(*b),
            s => Err(Error::Shape(format!("network input must be [batch, {c}, {l}], got {s:?}"))),
        }
    }

    /// Forward pass. Phase-shuffle layers draw shifts from `shuffle`; with
    /// `None` they are the identity.
    pub fn forward(&self, x: &Tensor<T>, mut shuffle: Option<&mut dyn RngCore>) -> Result<(Tensor<T>, Cache<T>)> {
        let batch = self.check_input(x)?;
        x.check_finite("network input")?;
        let mut acts = Vec::with_capacity(self.spec.layers.len() + 1);
        let mut aux = Vec::with_capacity(self.spec.layers.len());
        acts.push(x.data().to_vec());
        for (i, l) in self.spec.layers.iter().enumerate() {
            let shape = self.spec.shapes[i];
            let a = match (l, shuffle.as_deref_mut()) {
                (LayerSpec::PhaseShuffle { radius }, Some(rng)) if *radius > 0 => LayerAux {
                    shifts: draw_shifts(rng, batch * shape.0, *radius),
                },
                _ => LayerAux::default(),
            };
            let y = layer_forward(l, self.layer_params(i), acts.last().unwrap(), batch, shape, &a, true);
            if !y.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("output of layer {i} ({})", l.name())));
            }
            acts.push(y);
            aux.push(a);
        }
        let (c, l) = self.spec.output_shape();
        let out = Tensor::new(vec![batch, c, l], acts.last().unwrap().clone())?;
        Ok((
            out,
            Cache {
                net_id: self.id,
                generation: self.generation,
                batch,
                acts,
                aux,
            },
        ))
    }

    /// Forward without phase shuffle or cache.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward(x, None)?.0)
    }

    fn check_cache(&self, cache: &Cache<T>) -> Result<()> {
        if cache.net_id != self.id {
            return Err(Error::StaleCache("cache belongs to a different network".into()));
        }
        if cache.generation != self.generation {
            return Err(Error::StaleCache("parameters changed since the forward pass".into()));
        }
        Ok(())
    }

    /// Runs the backward pass and returns the gradient with respect to every
    /// layer output (`gs[i]` is dL/d(output of layer i)) and the input.
    fn backward_chain(&self, cache: &Cache<T>, out_grad: &Tensor<T>) -> Result<(Vec<Vec<T>>, Vec<T>)> {
        self.check_cache(cache)?;
        let (c, l) = self.spec.output_shape();
        if out_grad.shape() != [cache.batch, c, l] {
            return Err(Error::Shape(format!(
                "output gradient must be [{}, {c}, {l}], got {:?}",
                cache.batch,
                out_grad.shape()
            )));
        }
        out_grad.check_finite("output gradient")?;
        let n = self.spec.layers.len();
        let mut gs = vec![Vec::new(); n];
        let mut g = out_grad.data().to_vec();
        for i in (0..n).rev() {
            let gx = layer_backward_input(
                &self.spec.layers[i],
                self.layer_params(i),
                &cache.acts[i],
                &cache.acts[i + 1],
                &g,
                cache.batch,
                self.spec.shapes[i],
                &cache.aux[i],
            );
            gs[i] = std::mem::replace(&mut g, gx);
        }
        Ok((gs, g))
    }

    /// Parameter gradients and input gradient for `out_grad` = dL/d(output).
    pub fn backward(&self, cache: &Cache<T>, out_grad: &Tensor<T>) -> Result<(Vec<Tensor<T>>, Tensor<T>)> {
        let (gs, gx) = self.backward_chain(cache, out_grad)?;
        let mut grads = self.zero_grads();
        for (i, l) in self.spec.layers.iter().enumerate() {
            if let Some(o) = self.offsets[i] {
                let (dw, db) = layer_weight_grad(l, &cache.acts[i], &gs[i], cache.batch, self.spec.shapes[i], true);
                grads[o] = Tensor::new(self.params[o].shape().to_vec(), dw)?;
                grads[o + 1] = Tensor::new(self.params[o + 1].shape().to_vec(), db)?;
            }
        }
        let (c, l) = self.spec.input;
        let gx = Tensor::new(vec![cache.batch, c, l], gx)?;
        for g in &grads {
            g.check_finite("parameter gradient")?;
        }
        Ok((grads, gx))
    }

    /// WGAN-GP term `lambda * mean_b((|dD(x_b)/dx_b| - 1)^2)` for a scalar-output
    /// network, with its exact parameter gradient (double backward).
    pub fn gradient_penalty(&self, x: &Tensor<T>, lambda: f64, shuffle: Option<&mut dyn RngCore>) -> Result<Penalty<T>> {
        if self.spec.output_shape() != (1, 1) {
            return Err(Error::Shape("gradient penalty needs a scalar-output network".into()));
        }
        let (out, cache) = self.forward(x, shuffle)?;
        let b = cache.batch;
        let ones = Tensor::from_fn(vec![b, 1, 1], |_| T::one());
        let (gs, g0) = self.backward_chain(&cache, &ones)?;
        let per = g0.len() / b.max(1);
        let mut value = 0.0;
        let mut norms = Vec::with_capacity(b);
        let mut h = vec![T::zero(); g0.len()];
        for s in 0..b {
            let row = &g0[s * per..(s + 1) * per];
            let norm = row.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt();
            value += (norm - 1.0).powi(2);
            norms.push(norm);
            if norm > 0.0 {
                let k = T::of(lambda * 2.0 * (norm - 1.0) / (norm * b as f64));
                for (hv, &gv) in h[s * per..(s + 1) * per].iter_mut().zip(row) {
                    *hv = k * gv;
                }
            }
        }
        value *= lambda / b.max(1) as f64;

        let mut grads = self.zero_grads();
        for (i, l) in self.spec.layers.iter().enumerate() {
            let shape = self.spec.shapes[i];
            if let Some(o) = self.offsets[i] {
                let (dw, _) = layer_weight_grad(l, &h, &gs[i], b, shape, false);
                grads[o] = Tensor::new(self.params[o].shape().to_vec(), dw)?;
            }
            if i + 1 < self.spec.layers.len() {
                h = layer_jvp(l, self.layer_params(i), &cache.acts[i], &h, b, shape, &cache.aux[i])?;
            }
        }
        for g in &grads {
            g.check_finite("gradient-penalty gradient")?;
        }
        if !value.is_finite() {
            return Err(Error::NonFinite("gradient penalty".into()));
        }
        Ok(Penalty {
            value,
            grad_norms: norms,
            param_grads: grads,
            output: out,
        })
    }
}

/// `acc += scale * g` for matching parameter lists.
pub fn accumulate<T: Scalar>(acc: &mut [Tensor<T>], g: &[Tensor<T>], scale: T) {
    for (a, g) in acc.iter_mut().zip(g) {
        for (x, &y) in a.data_mut().iter_mut().zip(g.data()) {
            *x = *x + scale * y;
        }
    }
}
