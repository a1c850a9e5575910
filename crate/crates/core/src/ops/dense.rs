use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Fully connected layer, weights laid out `(in_features, out_features)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams<T = f32> {
    pub in_features: usize,
    pub out_features: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> DenseParams<T> {
    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        DenseParams {
            in_features,
            out_features,
            weights: vec![T::zero(); in_features * out_features],
            bias: vec![T::zero(); out_features],
        }
    }

    pub fn param_count(&self) -> usize {
        self.in_features * self.out_features + self.out_features
    }
}

fn check<T: Real>(x: &Tensor<T>, p: &DenseParams<T>) -> Result<()> {
    if x.len() != p.in_features {
        return Err(Error::shape(format!(
            "dense layer expects {} features, got {}",
            p.in_features,
            x.len()
        )));
    }
    if p.weights.len() != p.in_features * p.out_features || p.bias.len() != p.out_features {
        return Err(Error::shape("dense parameter buffers do not match their extents"));
    }
    Ok(())
}

/// `y = Wᵀx + b`.
pub fn dense_forward<T: Real>(x: &Tensor<T>, p: &DenseParams<T>) -> Result<Tensor<T>> {
    check(x, p)?;
    let mut y = p.bias.clone();
    T::gemm(
        1,
        p.in_features,
        p.out_features,
        T::one(),
        x.data(),
        p.in_features as isize,
        1,
        &p.weights,
        p.out_features as isize,
        1,
        T::one(),
        &mut y,
        p.out_features as isize,
        1,
    );
    Tensor::from_vec(&[p.out_features], y)
}

/// Returns `(grad_input, grad_weights, grad_bias)`.
pub fn dense_backward<T: Real>(
    x: &Tensor<T>,
    p: &DenseParams<T>,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    check(x, p)?;
    if grad_out.len() != p.out_features {
        return Err(Error::shape(format!(
            "dense gradient has {} entries, expected {}",
            grad_out.len(),
            p.out_features
        )));
    }
    let g = grad_out.data();
    let mut gw = vec![T::zero(); p.weights.len()];
    for (row, &xi) in gw.chunks_exact_mut(p.out_features).zip(x.data()) {
        for (w, &gj) in row.iter_mut().zip(g) {
            *w = xi * gj;
        }
    }
    let gx: Vec<T> = p
        .weights
        .chunks_exact(p.out_features)
        .map(|row| row.iter().zip(g).map(|(&w, &gj)| w * gj).sum())
        .collect();
    Ok((Tensor::from_vec(x.dims(), gx)?, gw, g.to_vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_count() {
        assert_eq!(DenseParams::<f32>::zeros(1024, 64).param_count(), 65_600);
        assert_eq!(DenseParams::<f32>::zeros(64, 64).param_count(), 4_160);
        assert_eq!(DenseParams::<f32>::zeros(64, 4).param_count(), 260);
    }

    #[test]
    fn identity() {
        let mut p = DenseParams::<f32>::zeros(3, 3);
        for i in 0..3 {
            p.weights[i * 3 + i] = 1.0;
        }
        let x = Tensor::from_vec(&[3], vec![1.5, -2.0, 0.25]).unwrap();
        assert_eq!(dense_forward(&x, &p).unwrap(), x);
    }

    #[test]
    fn length_mismatch() {
        let p = DenseParams::<f32>::zeros(3, 2);
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap();
        assert!(matches!(dense_forward(&x, &p), Err(Error::Shape(_))));
    }
}
