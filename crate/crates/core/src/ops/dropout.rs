use rand::Rng;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Inverted dropout: survivors are scaled by `1 / (1 - rate)` during
/// training so inference is a pass-through.
///
/// Returns the output and, in training mode, the per-element multiplier
/// (`0` or `1 / (1 - rate)`) needed by [`dropout_backward`].
pub fn dropout<T: Real, R: Rng + ?Sized>(
    x: &Tensor<T>,
    rate: f64,
    rng: &mut R,
    training: bool,
) -> Result<(Tensor<T>, Option<Vec<T>>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::arg(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    if !training {
        return Ok((x.clone(), None));
    }
    let keep = T::from_f64_lossy(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| {
            if rate > 0.0 && rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        })
        .collect();
    let out = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    Ok((Tensor::from_vec(x.dims(), out)?, Some(mask)))
}

pub fn dropout_backward<T: Real>(mask: &[T], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.len() != grad_out.len() {
        return Err(Error::State("dropout mask does not match gradient".into()));
    }
    let g = grad_out.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
    Tensor::from_vec(grad_out.dims(), g)
}
