//! Pointwise nonlinearities, looked up by name.
//!
//! Every convolution in the network shares one activation chosen at build
//! time. New activations plug in by implementing [`Pointwise`] (which derives
//! the slice-level [`Activation`] trait) and registering with an
//! [`ActivationRegistry`].

use std::fmt::Debug;
use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Slice-level activation kernel, object safe so it can live in a registry.
pub trait Activation: Send + Sync + Debug {
    /// Registry key, e.g. `relu`.
    fn name(&self) -> &'static str;

    /// Display form used in model summaries, e.g. `ReLU`.
    fn label(&self) -> &'static str;

    /// Whether the derivative is discontinuous somewhere (finite differences
    /// must avoid those points).
    fn has_kinks(&self) -> bool {
        false
    }

    fn eval(&self, x: f64) -> f64;

    fn derivative(&self, x: f64) -> f64;

    fn forward_f32(&self, pre: &[f32], out: &mut [f32]);
    fn forward_f64(&self, pre: &[f64], out: &mut [f64]);
    fn backward_f32(&self, pre: &[f32], grad_out: &[f32], grad_in: &mut [f32]);
    fn backward_f64(&self, pre: &[f64], grad_out: &[f64], grad_in: &mut [f64]);
}

/// Scalar definition of an activation, generic over precision.
pub trait Pointwise: Send + Sync + Debug {
    const NAME: &'static str;
    const LABEL: &'static str;
    const KINKED: bool = false;

    fn value<T: Real>(x: T) -> T;

    /// Derivative given the pre-activation.
    fn slope<T: Real>(x: T) -> T;
}

fn forward_with<P: Pointwise, T: Real>(pre: &[T], out: &mut [T]) {
    for (o, &x) in out.iter_mut().zip(pre) {
        *o = P::value(x);
    }
}

fn backward_with<P: Pointwise, T: Real>(pre: &[T], grad_out: &[T], grad_in: &mut [T]) {
    for ((gi, &x), &g) in grad_in.iter_mut().zip(pre).zip(grad_out) {
        *gi = g * P::slope(x);
    }
}

impl<P: Pointwise> Activation for P {
    fn name(&self) -> &'static str {
        P::NAME
    }

    fn label(&self) -> &'static str {
        P::LABEL
    }

    fn has_kinks(&self) -> bool {
        P::KINKED
    }

    fn eval(&self, x: f64) -> f64 {
        P::value(x)
    }

    fn derivative(&self, x: f64) -> f64 {
        P::slope(x)
    }

    fn forward_f32(&self, pre: &[f32], out: &mut [f32]) {
        forward_with::<P, f32>(pre, out)
    }

    fn forward_f64(&self, pre: &[f64], out: &mut [f64]) {
        forward_with::<P, f64>(pre, out)
    }

    fn backward_f32(&self, pre: &[f32], grad_out: &[f32], grad_in: &mut [f32]) {
        backward_with::<P, f32>(pre, grad_out, grad_in)
    }

    fn backward_f64(&self, pre: &[f64], grad_out: &[f64], grad_in: &mut [f64]) {
        backward_with::<P, f64>(pre, grad_out, grad_in)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Relu;

impl Pointwise for Relu {
    const NAME: &'static str = "relu";
    const LABEL: &'static str = "ReLU";
    const KINKED: bool = true;

    fn value<T: Real>(x: T) -> T {
        if x > T::zero() {
            x
        } else {
            T::zero()
        }
    }

    fn slope<T: Real>(x: T) -> T {
        if x > T::zero() {
            T::one()
        } else {
            T::zero()
        }
    }
}

/// `x * sigmoid(x)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Swish;

pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl Pointwise for Swish {
    const NAME: &'static str = "swish";
    const LABEL: &'static str = "Swish";

    fn value<T: Real>(x: T) -> T {
        x * sigmoid(x)
    }

    fn slope<T: Real>(x: T) -> T {
        let s = sigmoid(x);
        s + x * s * (T::one() - s)
    }
}

/// Name-keyed collection of activation kernels.
#[derive(Debug, Clone, Default)]
pub struct ActivationRegistry {
    entries: Vec<Arc<dyn Activation>>,
}

impl ActivationRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register(Arc::new(Relu));
        reg.register(Arc::new(Swish));
        reg
    }

    /// Adds `act`, replacing any entry with the same name.
    pub fn register(&mut self, act: Arc<dyn Activation>) {
        self.entries.retain(|a| a.name() != act.name());
        self.entries.push(act);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn Activation>> {
        let key = name.to_ascii_lowercase();
        self.entries.iter().find(|a| a.name() == key).cloned()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|a| a.name()).collect()
    }
}

fn builtin_registry() -> &'static ActivationRegistry {
    static REGISTRY: OnceLock<ActivationRegistry> = OnceLock::new();
    REGISTRY.get_or_init(ActivationRegistry::builtin)
}

/// Looks up a built-in activation (`relu`, `swish`), case-insensitively.
pub fn activation_by_name(name: &str) -> Result<Arc<dyn Activation>> {
    let reg = builtin_registry();
    reg.get(name).ok_or_else(|| {
        Error::arg(format!(
            "unknown activation `{name}` (known: {})",
            reg.names().join(", ")
        ))
    })
}

pub fn relu() -> Arc<dyn Activation> {
    Arc::new(Relu)
}

pub fn swish() -> Arc<dyn Activation> {
    Arc::new(Swish)
}

/// Applies `act` elementwise.
pub fn activation_forward<T: Real>(x: &Tensor<T>, act: &dyn Activation) -> Tensor<T> {
    let mut out = Tensor::zeros(x.dims());
    T::activate(act, x.data(), out.data_mut());
    out
}

/// Gradient with respect to the pre-activation `pre`.
pub fn activation_backward<T: Real>(
    pre: &Tensor<T>,
    grad_out: &Tensor<T>,
    act: &dyn Activation,
) -> Result<Tensor<T>> {
    if pre.dims() != grad_out.dims() {
        return Err(Error::shape(format!(
            "activation gradient has dims {:?}, expected {:?}",
            grad_out.dims(),
            pre.dims()
        )));
    }
    let mut gi = Tensor::zeros(pre.dims());
    T::activate_backward(act, pre.data(), grad_out.data(), gi.data_mut());
    Ok(gi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_values() {
        let r = Relu;
        assert_eq!(r.eval(-1.0), 0.0);
        assert_eq!(r.eval(2.0), 2.0);
        assert_eq!(r.derivative(0.0), 0.0);
        assert_eq!(r.derivative(0.5), 1.0);
    }

    #[test]
    fn swish_values() {
        let s = Swish;
        assert_eq!(s.eval(0.0), 0.0);
        // x / (1 + e^-x) evaluated directly
        let direct = |x: f64| x / (1.0 + (-x).exp());
        assert!((s.eval(1.0) - 0.731_059).abs() < 1e-6);
        assert!((s.eval(-1.0) + 0.268_941).abs() < 1e-6);
        for x in [-30.0, -3.0, -0.2, 0.7, 12.0] {
            assert!((s.eval(x) - direct(x)).abs() < 1e-12);
        }
    }

    #[test]
    fn swish_bounded_below() {
        let s = Swish;
        let min = (-2000..2000)
            .map(|i| s.eval(i as f64 * 0.01))
            .fold(f64::INFINITY, f64::min);
        assert!(min > -0.279 && min < -0.278);
    }

    #[test]
    fn registry_lookup() {
        assert_eq!(activation_by_name("ReLU").unwrap().label(), "ReLU");
        assert_eq!(activation_by_name("swish").unwrap().name(), "swish");
        assert!(matches!(activation_by_name("tanh"), Err(Error::Argument(_))));
    }

    #[test]
    fn register_replaces() {
        let mut reg = ActivationRegistry::builtin();
        reg.register(Arc::new(Relu));
        assert_eq!(reg.names().len(), 2);
    }
}
