use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::{Error, Result};

/// One layer of a [`super::NetworkSpec`]. Activations are `[batch, channels, length]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Flattens `channels * length` to `outputs` values, output shape `(outputs, 1)`.
    Dense { inputs: usize, outputs: usize },
    /// Strided "same" convolution: output length `ceil(len / stride)`.
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
        stride: usize,
    },
    /// Adjoint of [`LayerSpec::Conv1d`]: output length `stride * len`.
    #[serde(rename = "conv1d_transposed")]
    ConvTranspose1d {
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
        stride: usize,
    },
    Relu,
    LeakyRelu { slope: f64 },
    Tanh,
    Reshape { channels: usize, length: usize },
    /// Random per-channel time shift in `[-radius, radius]` with reflection.
    PhaseShuffle { radius: usize },
}

impl LayerSpec {
    pub fn name(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::ConvTranspose1d { .. } => "conv1d_transposed",
            LayerSpec::Relu => "relu",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Tanh => "tanh",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::PhaseShuffle { .. } => "phase_shuffle",
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(
            self,
            LayerSpec::Dense { .. } | LayerSpec::Conv1d { .. } | LayerSpec::ConvTranspose1d { .. }
        )
    }

    /// Weight and bias shapes, empty for parameter-free layers.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Dense { inputs, outputs } => vec![vec![outputs, inputs], vec![outputs]],
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
                ..
            } => vec![vec![out_channels, in_channels, kernel_len], vec![out_channels]],
            LayerSpec::ConvTranspose1d {
                in_channels,
                out_channels,
                kernel_len,
                ..
            } => vec![vec![in_channels, out_channels, kernel_len], vec![out_channels]],
            _ => Vec::new(),
        }
    }

    /// Effective fan-in used for weight init.
    pub fn fan_in(&self) -> usize {
        match *self {
            LayerSpec::Dense { inputs, .. } => inputs,
            LayerSpec::Conv1d {
                in_channels,
                kernel_len,
                ..
            } => in_channels * kernel_len,
            LayerSpec::ConvTranspose1d {
                in_channels,
                kernel_len,
                stride,
                ..
            } => (in_channels * kernel_len).div_ceil(stride),
            _ => 0,
        }
    }

    /// Per-sample output shape `(channels, length)`.
    pub fn output_shape(&self, (c, l): (usize, usize)) -> Result<(usize, usize)> {
        let bad = |msg: String| Err(Error::Shape(format!("{}: {msg}", self.name())));
        match *self {
            LayerSpec::Dense { inputs, outputs } => {
                if c * l != inputs {
                    return bad(format!("expects {inputs} inputs, got {c}x{l}"));
                }
                Ok((outputs, 1))
            }
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
                stride,
            } => {
                if c != in_channels {
                    return bad(format!("expects {in_channels} channels, got {c}"));
                }
                if stride == 0 || kernel_len == 0 || l == 0 {
                    return bad("zero stride, kernel or length".into());
                }
                Ok((out_channels, l.div_ceil(stride)))
            }
            LayerSpec::ConvTranspose1d {
                in_channels,
                out_channels,
                kernel_len,
                stride,
            } => {
                if c != in_channels {
                    return bad(format!("expects {in_channels} channels, got {c}"));
                }
                if stride == 0 || kernel_len == 0 || l == 0 {
                    return bad("zero stride, kernel or length".into());
                }
                Ok((out_channels, l * stride))
            }
            LayerSpec::Reshape { channels, length } => {
                if channels * length != c * l {
                    return bad(format!("cannot reshape {c}x{l} to {channels}x{length}"));
                }
                Ok((channels, length))
            }
            LayerSpec::PhaseShuffle { radius } => {
                if radius >= l {
                    return bad(format!("radius {radius} >= length {l}"));
                }
                Ok((c, l))
            }
            LayerSpec::LeakyRelu { slope } if !slope.is_finite() => bad("non-finite slope".into()),
            _ => Ok((c, l)),
        }
    }
}

/// Geometry shared by conv and transposed conv: `long` is the wide side,
/// `short = ceil(long / stride)`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub long: usize,
    pub short: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, kernel: usize, stride: usize, long: usize) -> Self {
        let short = long.div_ceil(stride);
        let pad = ((short - 1) * stride + kernel).saturating_sub(long) / 2;
        ConvGeom {
            channels,
            kernel,
            stride,
            long,
            short,
            pad,
        }
    }

    #[inline]
    fn src(&self, t: usize, k: usize) -> Option<usize> {
        let i = (t * self.stride + k) as isize - self.pad as isize;
        (i >= 0 && (i as usize) < self.long).then_some(i as usize)
    }

    /// `[B, C, long]` -> `[C*K, B*short]`.
    pub fn im2col<T: Scalar>(&self, x: &[T], batch: usize) -> Vec<T> {
        let (c, k, s, long) = (self.channels, self.kernel, self.short, self.long);
        let width = batch * s;
        let mut cols = vec![T::zero(); c * k * width];
        for b in 0..batch {
            for ci in 0..c {
                let xrow = &x[(b * c + ci) * long..(b * c + ci + 1) * long];
                for kk in 0..k {
                    let row = &mut cols[(ci * k + kk) * width + b * s..(ci * k + kk) * width + (b + 1) * s];
                    for (t, v) in row.iter_mut().enumerate() {
                        if let Some(i) = self.src(t, kk) {
                            *v = xrow[i];
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Self::im2col`]: accumulates `[C*K, B*short]` into `[B, C, long]`.
    pub fn col2im<T: Scalar>(&self, cols: &[T], batch: usize) -> Vec<T> {
        let (c, k, s, long) = (self.channels, self.kernel, self.short, self.long);
        let width = batch * s;
        let mut x = vec![T::zero(); batch * c * long];
        for b in 0..batch {
            for ci in 0..c {
                let xrow = &mut x[(b * c + ci) * long..(b * c + ci + 1) * long];
                for kk in 0..k {
                    let row = &cols[(ci * k + kk) * width + b * s..(ci * k + kk) * width + (b + 1) * s];
                    for (t, &v) in row.iter().enumerate() {
                        if let Some(i) = self.src(t, kk) {
                            xrow[i] = xrow[i] + v;
                        }
                    }
                }
            }
        }
        x
    }
}

/// `[B, C, L]` -> `[C, B*L]`.
fn to_channel_major<T: Scalar>(x: &[T], batch: usize, c: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..batch {
        for ci in 0..c {
            out[ci * batch * l + b * l..ci * batch * l + (b + 1) * l]
                .copy_from_slice(&x[(b * c + ci) * l..(b * c + ci + 1) * l]);
        }
    }
    out
}

fn from_channel_major<T: Scalar>(x: &[T], batch: usize, c: usize, l: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for b in 0..batch {
        for ci in 0..c {
            out[(b * c + ci) * l..(b * c + ci + 1) * l]
                .copy_from_slice(&x[ci * batch * l + b * l..ci * batch * l + (b + 1) * l]);
        }
    }
    out
}

fn add_bias<T: Scalar>(y: &mut [T], bias: &[T], len: usize) {
    let c = bias.len();
    for (i, v) in y.iter_mut().enumerate() {
        *v = *v + bias[(i / len) % c];
    }
}

fn bias_grad<T: Scalar>(g: &[T], c: usize, len: usize) -> Vec<T> {
    let mut db = vec![T::zero(); c];
    for (i, &v) in g.iter().enumerate() {
        let k = (i / len) % c;
        db[k] = db[k] + v;
    }
    db
}

/// Reflect an index into `0..len`.
#[inline]
pub(crate) fn reflect(i: isize, len: usize) -> usize {
    let n = len as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i.clamp(0, n - 1) as usize
}

/// Shift each `(batch, channel)` row by `shifts[row]` with reflection padding.
pub(crate) fn apply_shifts<T: Scalar>(x: &[T], l: usize, shifts: &[i32]) -> Vec<T> {
    let mut y = vec![T::zero(); x.len()];
    for (row, &k) in shifts.iter().enumerate() {
        let src = &x[row * l..(row + 1) * l];
        let dst = &mut y[row * l..(row + 1) * l];
        for (t, v) in dst.iter_mut().enumerate() {
            *v = src[reflect(t as isize - k as isize, l)];
        }
    }
    y
}

fn shifts_adjoint<T: Scalar>(g: &[T], l: usize, shifts: &[i32]) -> Vec<T> {
    let mut x = vec![T::zero(); g.len()];
    for (row, &k) in shifts.iter().enumerate() {
        let src = &g[row * l..(row + 1) * l];
        let dst = &mut x[row * l..(row + 1) * l];
        for (t, &v) in src.iter().enumerate() {
            let i = reflect(t as isize - k as isize, l);
            dst[i] = dst[i] + v;
        }
    }
    x
}

pub(crate) fn draw_shifts(rng: &mut dyn RngCore, rows: usize, radius: usize) -> Vec<i32> {
    let r = radius as i32;
    (0..rows).map(|_| rng.gen_range(-r..=r)).collect()
}

/// Everything a layer needs from its forward pass besides its input.
#[derive(Debug, Clone, Default)]
pub(crate) struct LayerAux {
    pub shifts: Vec<i32>,
}

/// Forward of one layer on `x` with per-sample input shape `(c, l)`.
/// `bias = false` gives the linear part only.
#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_forward<T: Scalar>(
    spec: &LayerSpec,
    params: &[Tensor<T>],
    x: &[T],
    batch: usize,
    (c, l): (usize, usize),
    aux: &LayerAux,
    bias: bool,
) -> Vec<T> {
    match *spec {
        LayerSpec::Dense { inputs, outputs } => {
            let w = params[0].data();
            let mut y = vec![T::zero(); batch * outputs];
            T::gemm(batch, inputs, outputs, T::one(), x, (inputs as isize, 1), w, (1, inputs as isize), T::zero(), &mut y, (outputs as isize, 1));
            if bias {
                add_bias(&mut y, params[1].data(), 1);
            }
            y
        }
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel_len,
            stride,
        } => {
            let g = ConvGeom::new(in_channels, kernel_len, stride, l);
            let cols = g.im2col(x, batch);
            let ck = in_channels * kernel_len;
            let width = batch * g.short;
            let mut y = vec![T::zero(); out_channels * width];
            T::gemm(out_channels, ck, width, T::one(), params[0].data(), (ck as isize, 1), &cols, (width as isize, 1), T::zero(), &mut y, (width as isize, 1));
            let mut y = from_channel_major(&y, batch, out_channels, g.short);
            if bias {
                add_bias(&mut y, params[1].data(), g.short);
            }
            y
        }
        LayerSpec::ConvTranspose1d {
            in_channels,
            out_channels,
            kernel_len,
            stride,
        } => {
            let g = ConvGeom::new(out_channels, kernel_len, stride, l * stride);
            debug_assert_eq!(g.short, l);
            let xc = to_channel_major(x, batch, c, l);
            let ck = out_channels * kernel_len;
            let width = batch * l;
            let mut cols = vec![T::zero(); ck * width];
            T::gemm(ck, in_channels, width, T::one(), params[0].data(), (1, ck as isize), &xc, (width as isize, 1), T::zero(), &mut cols, (width as isize, 1));
            let mut y = g.col2im(&cols, batch);
            if bias {
                add_bias(&mut y, params[1].data(), g.long);
            }
            y
        }
        LayerSpec::Relu => x.iter().map(|&v| if v > T::zero() { v } else { T::zero() }).collect(),
        LayerSpec::LeakyRelu { slope } => {
            let a = T::of(slope);
            x.iter().map(|&v| if v > T::zero() { v } else { a * v }).collect()
        }
        LayerSpec::Tanh => x.iter().map(|v| v.tanh()).collect(),
        LayerSpec::Reshape { .. } => x.to_vec(),
        LayerSpec::PhaseShuffle { radius } => {
            if radius == 0 || aux.shifts.is_empty() {
                x.to_vec()
            } else {
                apply_shifts(x, l, &aux.shifts)
            }
        }
    }
}

/// Gradient with respect to the layer input. `x` is the cached input and
/// `y` the cached output.
#[allow(clippy::too_many_arguments)]
pub(crate) fn layer_backward_input<T: Scalar>(
    spec: &LayerSpec,
    params: &[Tensor<T>],
    x: &[T],
    y: &[T],
    gy: &[T],
    batch: usize,
    (c, l): (usize, usize),
    aux: &LayerAux,
) -> Vec<T> {
    match *spec {
        LayerSpec::Dense { inputs, outputs } => {
            let mut gx = vec![T::zero(); batch * inputs];
            T::gemm(batch, outputs, inputs, T::one(), gy, (outputs as isize, 1), params[0].data(), (inputs as isize, 1), T::zero(), &mut gx, (inputs as isize, 1));
            gx
        }
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel_len,
            stride,
        } => {
            let g = ConvGeom::new(in_channels, kernel_len, stride, l);
            let gyc = to_channel_major(gy, batch, out_channels, g.short);
            let ck = in_channels * kernel_len;
            let width = batch * g.short;
            let mut gcols = vec![T::zero(); ck * width];
            T::gemm(ck, out_channels, width, T::one(), params[0].data(), (1, ck as isize), &gyc, (width as isize, 1), T::zero(), &mut gcols, (width as isize, 1));
            g.col2im(&gcols, batch)
        }
        LayerSpec::ConvTranspose1d {
            in_channels,
            out_channels,
            kernel_len,
            stride,
        } => {
            let g = ConvGeom::new(out_channels, kernel_len, stride, l * stride);
            let gcols = g.im2col(gy, batch);
            let ck = out_channels * kernel_len;
            let width = batch * l;
            let mut gxc = vec![T::zero(); in_channels * width];
            T::gemm(in_channels, ck, width, T::one(), params[0].data(), (ck as isize, 1), &gcols, (width as isize, 1), T::zero(), &mut gxc, (width as isize, 1));
            from_channel_major(&gxc, batch, in_channels, l)
        }
        LayerSpec::Relu => x
            .iter()
            .zip(gy)
            .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
            .collect(),
        LayerSpec::LeakyRelu { slope } => {
            let a = T::of(slope);
            x.iter().zip(gy).map(|(&v, &g)| if v > T::zero() { g } else { a * g }).collect()
        }
        LayerSpec::Tanh => y.iter().zip(gy).map(|(&v, &g)| g * (T::one() - v * v)).collect(),
        LayerSpec::Reshape { .. } => gy.to_vec(),
        LayerSpec::PhaseShuffle { radius } => {
            if radius == 0 || aux.shifts.is_empty() {
                gy.to_vec()
            } else {
                let _ = c;
                shifts_adjoint(gy, l, &aux.shifts)
            }
        }
    }
}

/// Parameter gradients `(dW, db)` of an affine layer given its input `x`
/// and output gradient `gy`.
pub(crate) fn layer_weight_grad<T: Scalar>(
    spec: &LayerSpec,
    x: &[T],
    gy: &[T],
    batch: usize,
    (c, l): (usize, usize),
    with_bias: bool,
) -> (Vec<T>, Vec<T>) {
    match *spec {
        LayerSpec::Dense { inputs, outputs } => {
            let mut dw = vec![T::zero(); outputs * inputs];
            T::gemm(outputs, batch, inputs, T::one(), gy, (1, outputs as isize), x, (inputs as isize, 1), T::zero(), &mut dw, (inputs as isize, 1));
            let db = if with_bias { bias_grad(gy, outputs, 1) } else { Vec::new() };
            (dw, db)
        }
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel_len,
            stride,
        } => {
            let g = ConvGeom::new(in_channels, kernel_len, stride, l);
            let cols = g.im2col(x, batch);
            let gyc = to_channel_major(gy, batch, out_channels, g.short);
            let ck = in_channels * kernel_len;
            let width = batch * g.short;
            let mut dw = vec![T::zero(); out_channels * ck];
            T::gemm(out_channels, width, ck, T::one(), &gyc, (width as isize, 1), &cols, (1, width as isize), T::zero(), &mut dw, (ck as isize, 1));
            let db = if with_bias { bias_grad(gy, out_channels, g.short) } else { Vec::new() };
            (dw, db)
        }
        LayerSpec::ConvTranspose1d {
            in_channels,
            out_channels,
            kernel_len,
            stride,
        } => {
            let g = ConvGeom::new(out_channels, kernel_len, stride, l * stride);
            let gcols = g.im2col(gy, batch);
            let xc = to_channel_major(x, batch, c, l);
            let ck = out_channels * kernel_len;
            let width = batch * l;
            let mut dw = vec![T::zero(); in_channels * ck];
            T::gemm(in_channels, width, ck, T::one(), &xc, (width as isize, 1), &gcols, (1, width as isize), T::zero(), &mut dw, (ck as isize, 1));
            let db = if with_bias { bias_grad(gy, out_channels, g.long) } else { Vec::new() };
            (dw, db)
        }
        _ => (Vec::new(), Vec::new()),
    }
}

/// Jacobian-vector product of a layer at its cached input, used by the
/// gradient penalty. Only piecewise-linear layers are supported.
pub(crate) fn layer_jvp<T: Scalar>(
    spec: &LayerSpec,
    params: &[Tensor<T>],
    x: &[T],
    h: &[T],
    batch: usize,
    shape: (usize, usize),
    aux: &LayerAux,
) -> Result<Vec<T>> {
    Ok(match *spec {
        LayerSpec::Relu => x
            .iter()
            .zip(h)
            .map(|(&v, &d)| if v > T::zero() { d } else { T::zero() })
            .collect(),
        LayerSpec::LeakyRelu { slope } => {
            let a = T::of(slope);
            x.iter().zip(h).map(|(&v, &d)| if v > T::zero() { d } else { a * d }).collect()
        }
        LayerSpec::Tanh => {
            return Err(Error::Config(
                "gradient penalty needs a piecewise-linear network (tanh found)".into(),
            ))
        }
        _ => layer_forward(spec, params, h, batch, shape, aux, false),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_lengths() {
        let c = LayerSpec::Conv1d {
            in_channels: 1,
            out_channels: 2,
            kernel_len: 25,
            stride: 4,
        };
        assert_eq!(c.output_shape((1, 4096)).unwrap(), (2, 1024));
        assert_eq!(c.output_shape((1, 10)).unwrap(), (2, 3));
        assert!(c.output_shape((2, 10)).is_err());
        let t = LayerSpec::ConvTranspose1d {
            in_channels: 3,
            out_channels: 1,
            kernel_len: 25,
            stride: 4,
        };
        assert_eq!(t.output_shape((3, 1024)).unwrap(), (1, 4096));
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        let g = ConvGeom::new(2, 5, 3, 11);
        let x: Vec<f64> = (0..2 * 2 * 11).map(|i| (i as f64 * 0.37).sin()).collect();
        let cols = g.im2col(&x, 2);
        let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let back = g.col2im(&y, 2);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn identity_kernel_passes_input_through() {
        let spec = LayerSpec::Conv1d {
            in_channels: 2,
            out_channels: 2,
            kernel_len: 5,
            stride: 1,
        };
        let mut w = vec![0.0f64; 2 * 2 * 5];
        w[2] = 1.0; // out 0, in 0, center
        w[(2 + 1) * 5 + 2] = 1.0; // out 1, in 1, center
        let params = vec![Tensor::new(vec![2, 2, 5], w).unwrap(), Tensor::zeros(vec![2])];
        let x: Vec<f64> = (0..2 * 2 * 9).map(|i| i as f64 - 7.0).collect();
        let y = layer_forward(&spec, &params, &x, 2, (2, 9), &LayerAux::default(), true);
        assert_eq!(y, x);
    }

    #[test]
    fn transposed_is_adjoint_of_conv() {
        let conv = LayerSpec::Conv1d {
            in_channels: 2,
            out_channels: 3,
            kernel_len: 7,
            stride: 2,
        };
        let convt = LayerSpec::ConvTranspose1d {
            in_channels: 3,
            out_channels: 2,
            kernel_len: 7,
            stride: 2,
        };
        let w: Vec<f64> = (0..3 * 2 * 7).map(|i| (i as f64 * 0.7).sin()).collect();
        let pc = vec![Tensor::new(vec![3, 2, 7], w.clone()).unwrap(), Tensor::zeros(vec![3])];
        let pt = vec![Tensor::new(vec![3, 2, 7], w).unwrap(), Tensor::zeros(vec![2])];
        let x: Vec<f64> = (0..2 * 12).map(|i| (i as f64 * 0.3).cos()).collect();
        let u: Vec<f64> = (0..3 * 6).map(|i| (i as f64 * 0.9).sin()).collect();
        let aux = LayerAux::default();
        let ax = layer_forward(&conv, &pc, &x, 1, (2, 12), &aux, true);
        let atu = layer_forward(&convt, &pt, &u, 1, (3, 6), &aux, true);
        let lhs: f64 = ax.iter().zip(&u).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&atu).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn reflection() {
        assert_eq!(reflect(-1, 5), 1);
        assert_eq!(reflect(-2, 5), 2);
        assert_eq!(reflect(5, 5), 3);
        assert_eq!(reflect(6, 5), 2);
        assert_eq!(reflect(2, 5), 2);
    }
}
