use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Floor inside the logarithm of the cross-entropy.
pub const LOG_EPSILON: f64 = 1e-12;

/// Max-subtracted softmax over a vector of logits.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.len() < 2 {
        return Err(Error::arg("softmax needs at least two classes"));
    }
    let max = logits
        .data()
        .iter()
        .copied()
        .fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.data().iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Tensor::from_vec(logits.dims(), exps.into_iter().map(|e| e / total).collect())
}

/// Categorical cross-entropy of softmax output `probs` against `label`.
///
/// Returns the loss and its gradient with respect to the logits that
/// produced `probs`, i.e. `probs - onehot(label)`.
pub fn cross_entropy_loss<T: Real>(probs: &Tensor<T>, label: usize) -> Result<(T, Tensor<T>)> {
    if label >= probs.len() {
        return Err(Error::arg(format!(
            "label {label} out of range for {} classes",
            probs.len()
        )));
    }
    let eps = T::from_f64_lossy(LOG_EPSILON);
    let loss = -(probs.data()[label] + eps).ln();
    let mut grad = probs.clone();
    grad.data_mut()[label] = grad.data()[label] - T::one();
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec(v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(&[v.len()], v.to_vec()).unwrap()
    }

    #[test]
    fn uniform() {
        let p = softmax(&vec(&[0.3; 4])).unwrap();
        assert!(p.data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
    }

    #[test]
    fn closed_form() {
        let p = softmax(&vec(&[0.0, 3f64.ln()])).unwrap();
        assert!((p.data()[0] - 0.25).abs() < 1e-12);
        assert!((p.data()[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn shift_invariant() {
        let a = softmax(&vec(&[1.0, -2.0, 0.5])).unwrap();
        let b = softmax(&vec(&[101.0, 98.0, 100.5])).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn large_logits_stay_finite() {
        let p = softmax(&Tensor::<f32>::from_vec(&[2], vec![1e4, -1e4]).unwrap()).unwrap();
        assert_eq!(p.data(), &[1.0, 0.0]);
    }

    #[test]
    fn single_class_rejected() {
        assert!(softmax(&vec(&[1.0])).is_err());
    }

    #[test]
    fn loss_values() {
        let (l, _) = cross_entropy_loss(&vec(&[0.0, 1.0, 0.0]), 1).unwrap();
        assert!(l.abs() < 1e-11);
        let (l, g) = cross_entropy_loss(&vec(&[0.25; 4]), 2).unwrap();
        assert!((l - 1.386_294).abs() < 1e-6);
        assert!(g.data().iter().sum::<f64>().abs() < 1e-15);
        assert!(matches!(
            cross_entropy_loss(&vec(&[0.5, 0.5]), 2),
            Err(Error::Argument(_))
        ));
    }
}
