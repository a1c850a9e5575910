use std::collections::BTreeMap;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// A first-order update rule over flat parameter buffers.
///
/// `params` and `grads` are parallel lists of buffers; the optimizer keeps
/// per-buffer state keyed by position, so every call must pass the same
/// buffers in the same order.
pub trait Optimizer: Send {
    fn name(&self) -> &'static str;

    fn step(&mut self, params: &mut [&mut [f32]], grads: &[&[f32]], learning_rate: f32) -> Result<()>;
}

fn check_shapes(params: &[&mut [f32]], grads: &[&[f32]]) -> Result<()> {
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::arg("parameter and gradient buffers do not line up"));
    }
    Ok(())
}

fn ensure_state(state: &mut Vec<Vec<f32>>, params: &[&mut [f32]]) -> Result<()> {
    if state.is_empty() {
        *state = params.iter().map(|p| vec![0.0; p.len()]).collect();
    } else if state.len() != params.len() || state.iter().zip(params).any(|(s, p)| s.len() != p.len()) {
        return Err(Error::State("optimizer reused on differently shaped parameters".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamSettings {
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
}

impl Default for AdamSettings {
    fn default() -> Self {
        AdamSettings {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    settings: AdamSettings,
    t: i32,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(settings: AdamSettings) -> Self {
        Adam {
            settings,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

impl Optimizer for Adam {
    fn name(&self) -> &'static str {
        "adam"
    }

    fn step(&mut self, params: &mut [&mut [f32]], grads: &[&[f32]], learning_rate: f32) -> Result<()> {
        check_shapes(params, grads)?;
        ensure_state(&mut self.m, params)?;
        ensure_state(&mut self.v, params)?;
        let AdamSettings { beta1, beta2, epsilon } = self.settings;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t);
        let c2 = 1.0 - beta2.powi(self.t);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Heavy-ball momentum: `v = μ v - lr g; p += v`.
#[derive(Debug, Clone)]
pub struct SgdMomentum {
    momentum: f32,
    velocity: Vec<Vec<f32>>,
}

impl SgdMomentum {
    pub fn new(momentum: f32) -> Self {
        SgdMomentum {
            momentum,
            velocity: Vec::new(),
        }
    }
}

impl Optimizer for SgdMomentum {
    fn name(&self) -> &'static str {
        "sgd-momentum"
    }

    fn step(&mut self, params: &mut [&mut [f32]], grads: &[&[f32]], learning_rate: f32) -> Result<()> {
        check_shapes(params, grads)?;
        ensure_state(&mut self.velocity, params)?;
        for ((p, g), vel) in params.iter_mut().zip(grads).zip(&mut self.velocity) {
            for i in 0..p.len() {
                vel[i] = self.momentum * vel[i] - learning_rate * g[i];
                p[i] += vel[i];
            }
        }
        Ok(())
    }
}

/// Optimizer choice with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerSpec {
    Adam(AdamSettings),
    SgdMomentum { momentum: f32 },
}

impl Default for OptimizerSpec {
    fn default() -> Self {
        OptimizerSpec::Adam(AdamSettings::default())
    }
}

impl OptimizerSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            OptimizerSpec::Adam(s) => {
                let unit = |b: f32| (0.0..1.0).contains(&b);
                if !unit(s.beta1) || !unit(s.beta2) || !(s.epsilon > 0.0) {
                    return Err(Error::arg(format!("invalid adam settings {s:?}")));
                }
            }
            OptimizerSpec::SgdMomentum { momentum } => {
                if !(0.0..1.0).contains(&momentum) {
                    return Err(Error::arg(format!("momentum {momentum} not in [0, 1)")));
                }
            }
        }
        Ok(())
    }

    pub fn build(&self) -> Box<dyn Optimizer> {
        match *self {
            OptimizerSpec::Adam(s) => Box::new(Adam::new(s)),
            OptimizerSpec::SgdMomentum { momentum } => Box::new(SgdMomentum::new(momentum)),
        }
    }
}

type Factory = fn() -> OptimizerSpec;

/// Named optimizer presets.
#[derive(Debug, Clone, Default)]
pub struct OptimizerRegistry {
    entries: BTreeMap<String, Factory>,
}

impl OptimizerRegistry {
    pub fn builtin() -> Self {
        let mut r = OptimizerRegistry::default();
        r.register("adam", OptimizerSpec::default);
        r.register("sgd-momentum", || OptimizerSpec::SgdMomentum { momentum: 0.9 });
        r
    }

    pub fn register(&mut self, name: &str, factory: Factory) {
        self.entries.insert(name.to_ascii_lowercase(), factory);
    }

    pub fn get(&self, name: &str) -> Option<OptimizerSpec> {
        self.entries.get(&name.to_ascii_lowercase()).map(|f| f())
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.keys().map(String::as_str).collect()
    }
}

/// Preset by name from the built-in registry.
pub fn optimizer_by_name(name: &str) -> Result<OptimizerSpec> {
    static REG: OnceLock<OptimizerRegistry> = OnceLock::new();
    let reg = REG.get_or_init(OptimizerRegistry::builtin);
    reg.get(name).ok_or_else(|| {
        Error::arg(format!(
            "unknown optimizer `{name}` (known: {})",
            reg.names().join(", ")
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_on_a_parabola() {
        let mut p = vec![4.0f32];
        let mut opt = SgdMomentum::new(0.0);
        for _ in 0..50 {
            let g = vec![2.0 * p[0]];
            opt.step(&mut [p.as_mut_slice()], &[g.as_slice()], 0.1).unwrap();
        }
        assert!(p[0].abs() < 1e-3);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut p = vec![1.0f32, -1.0];
        let g = vec![0.5f32, -3.0];
        Adam::new(AdamSettings::default())
            .step(&mut [p.as_mut_slice()], &[g.as_slice()], 0.01)
            .unwrap();
        assert!((p[0] - 0.99).abs() < 1e-5 && (p[1] + 0.99).abs() < 1e-5);
    }

    #[test]
    fn registry_and_validation() {
        assert_eq!(optimizer_by_name("ADAM").unwrap(), OptimizerSpec::default());
        assert!(optimizer_by_name("lbfgs").is_err());
        assert!(OptimizerSpec::SgdMomentum { momentum: 1.0 }.validate().is_err());
        let mut opt = SgdMomentum::new(0.5);
        let mut a = vec![0.0f32; 2];
        assert!(opt.step(&mut [a.as_mut_slice()], &[&[1.0][..]], 0.1).is_err());
    }
}
