use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Stacks feature maps along the channel axis, in argument order.
pub fn concat_channels<T: Real>(inputs: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if inputs.len() < 2 {
        return Err(Error::arg("concatenation needs at least two inputs"));
    }
    let (h, w, _) = inputs[0].hwc()?;
    let mut widths = Vec::with_capacity(inputs.len());
    for t in inputs {
        let (th, tw, tc) = t.hwc()?;
        if (th, tw) != (h, w) {
            return Err(Error::shape(format!(
                "cannot concatenate a {th}x{tw} map with a {h}x{w} map"
            )));
        }
        widths.push(tc);
    }
    let total: usize = widths.iter().sum();
    let mut out = Vec::with_capacity(h * w * total);
    for px in 0..h * w {
        for (t, &c) in inputs.iter().zip(&widths) {
            out.extend_from_slice(&t.data()[px * c..(px + 1) * c]);
        }
    }
    Tensor::from_vec(&[h, w, total], out)
}

/// Splits a channel-concatenated gradient back into per-input pieces.
pub fn split_channels<T: Real>(grad: &Tensor<T>, widths: &[usize]) -> Result<Vec<Tensor<T>>> {
    let (h, w, c) = grad.hwc()?;
    if widths.iter().sum::<usize>() != c {
        return Err(Error::shape(format!(
            "channel widths {widths:?} do not sum to {c}"
        )));
    }
    let mut parts: Vec<Vec<T>> = widths.iter().map(|&k| Vec::with_capacity(h * w * k)).collect();
    for px in grad.data().chunks_exact(c) {
        let mut off = 0;
        for (part, &k) in parts.iter_mut().zip(widths) {
            part.extend_from_slice(&px[off..off + k]);
            off += k;
        }
    }
    parts
        .into_iter()
        .zip(widths)
        .map(|(p, &k)| Tensor::from_vec(&[h, w, k], p))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_land_in_their_channel() {
        let a = Tensor::<f32>::filled(&[1, 1, 1], 1.0);
        let b = Tensor::<f32>::filled(&[1, 1, 1], 2.0);
        let c = Tensor::<f32>::filled(&[1, 1, 1], 3.0);
        let out = concat_channels(&[&a, &b, &c]).unwrap();
        assert_eq!(out.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn table_shapes() {
        let a = Tensor::<f32>::zeros(&[56, 56, 32]);
        let out = concat_channels(&[&a, &a, &a]).unwrap();
        assert_eq!(out.dims(), &[56, 56, 96]);
    }

    #[test]
    fn mismatch_and_arity() {
        let a = Tensor::<f32>::zeros(&[4, 4, 2]);
        let b = Tensor::<f32>::zeros(&[4, 5, 2]);
        assert!(matches!(concat_channels(&[&a, &b]), Err(Error::Shape(_))));
        assert!(matches!(concat_channels(&[&a]), Err(Error::Argument(_))));
    }
}
