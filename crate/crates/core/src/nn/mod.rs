//! Minimal 1-D convolutional network library with hand-written gradients.

mod adam;
mod container;
mod layer;
mod network;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use container::{Container, EntryData, MAGIC, VERSION};
pub use layer::LayerSpec;
pub use network::{accumulate, Cache, Network, NetworkSpec, Penalty};
pub use tensor::{Scalar, Tensor};

use rand::RngCore;

use crate::{Error, Result};

/// Shifts each `(batch, channel)` row of `x` (`[B, C, L]`) by an integer drawn
/// uniformly from `[-radius, radius]`, filling with reflection. Returns the
/// shifted tensor and the shifts used.
pub fn phase_shuffle<T: Scalar>(x: &Tensor<T>, radius: usize, rng: &mut dyn RngCore) -> Result<(Tensor<T>, Vec<i32>)> {
    let (rows, l) = match x.shape() {
        [b, c, l] => (b * c, *l),
        s => return Err(Error::Shape(format!("phase shuffle needs [batch, channels, length], got {s:?}"))),
    };
    if radius >= l {
        return Err(Error::InvalidInput(format!("shuffle radius {radius} >= length {l}")));
    }
    if radius == 0 {
        return Ok((x.clone(), vec![0; rows]));
    }
    let shifts = layer::draw_shifts(rng, rows, radius);
    let y = layer::apply_shifts(x.data(), l, &shifts);
    Ok((Tensor::new(x.shape().to_vec(), y)?, shifts))
}
