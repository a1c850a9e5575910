//! Finite-difference verification of every backward pass, in 64-bit precision.
//!
//! Each check builds a scalar objective `L`, asks the analytic code for
//! `dL/dθ`, and compares it with central differences
//! `(L(θ + h) - L(θ - h)) / 2h` coordinate by coordinate.

use std::fmt;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::Result;
use crate::graph::{ModelConfig, ModelGraph};
use crate::ops::activation::{relu, swish};
use crate::ops::{
    activation_backward, activation_forward, concat_channels, conv2d_backward, conv2d_forward,
    cross_entropy_loss, dense_backward, dense_forward, dropout, dropout_backward, pool_backward,
    pool_forward, softmax, split_channels, Activation, ConvParams, DenseParams, Padding, PoolKind,
    PoolSpec,
};
use crate::tensor::Tensor;

pub const OP_TOLERANCE: f64 = 1e-4;
pub const MODEL_TOLERANCE: f64 = 1e-3;
/// Denominator floor of [`rel_error`], so that two near-zero gradients agree.
pub const REL_FLOOR: f64 = 1e-6;
/// Central-difference step.
pub const STEP: f64 = 1e-5;
/// Side of the reduced whole-model input.
pub const REDUCED_SIDE: usize = 32;

/// `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:<16} max rel error {:.3e} (tolerance {:.0e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.max_rel_error,
            self.tolerance
        )?;
        if !self.detail.is_empty() {
            write!(f, "  [{}]", self.detail)?;
        }
        Ok(())
    }
}

/// One finite-difference experiment.
pub trait GradCheck: Send + Sync {
    fn name(&self) -> &str;

    fn tolerance(&self) -> f64 {
        OP_TOLERANCE
    }

    /// Largest relative error seen, plus free-form notes.
    fn measure(&self, seed: u64) -> Result<(f64, String)>;

    fn run(&self, seed: u64) -> CheckResult {
        let (err, detail) = match self.measure(seed) {
            Ok(v) => v,
            Err(e) => (f64::INFINITY, format!("error: {e}")),
        };
        CheckResult {
            name: self.name().to_string(),
            max_rel_error: err,
            tolerance: self.tolerance(),
            passed: err < self.tolerance(),
            detail,
        }
    }
}

/// Compares `analytic[i]` against central differences of `eval` for each
/// coordinate in `coords` of `values`.
fn compare(
    values: &mut [f64],
    analytic: &[f64],
    coords: impl IntoIterator<Item = usize>,
    eval: &mut dyn FnMut(&[f64]) -> Result<f64>,
) -> Result<f64> {
    let mut worst = 0f64;
    for i in coords {
        let v = values[i];
        values[i] = v + STEP;
        let plus = eval(values)?;
        values[i] = v - STEP;
        let minus = eval(values)?;
        values[i] = v;
        worst = worst.max(rel_error(analytic[i], (plus - minus) / (2.0 * STEP)));
    }
    Ok(worst)
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn tensor(dims: &[usize], data: Vec<f64>) -> Tensor<f64> {
    Tensor::from_vec(dims, data).expect("check tensors are well formed")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Signature of a convolution backward pass, so a faulty one can be injected.
pub type ConvBackwardFn =
    fn(&Tensor<f64>, &ConvParams<f64>, Padding, usize, &Tensor<f64>) -> Result<(Tensor<f64>, Vec<f64>, Vec<f64>)>;

/// Convolution over the four kernel shapes of the network plus one strided
/// valid-padding case.
pub struct ConvCheck {
    backward: ConvBackwardFn,
}

impl ConvCheck {
    pub fn new() -> Self {
        Self::with_backward(conv2d_backward::<f64>)
    }

    pub fn with_backward(backward: ConvBackwardFn) -> Self {
        ConvCheck { backward }
    }
}

impl Default for ConvCheck {
    fn default() -> Self {
        Self::new()
    }
}

impl GradCheck for ConvCheck {
    fn name(&self) -> &str {
        "conv2d"
    }

    fn measure(&self, seed: u64) -> Result<(f64, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cases = [
            (1, 1, Padding::Same, 1),
            (1, 3, Padding::Same, 1),
            (3, 1, Padding::Same, 1),
            (3, 3, Padding::Same, 1),
            (3, 3, Padding::Valid, 2),
        ];
        let (h, w, cin, cout) = (5, 6, 3, 4);
        let mut worst = 0f64;
        for (kh, kw, padding, stride) in cases {
            let mut x = gaussian(&mut rng, h * w * cin, 1.0);
            let mut p = ConvParams::<f64>::zeros(kh, kw, cin, cout);
            p.weights = gaussian(&mut rng, p.weights.len(), 0.5);
            p.bias = gaussian(&mut rng, cout, 0.5);
            let y = conv2d_forward(&tensor(&[h, w, cin], x.clone()), &p, padding, stride)?;
            let r = gaussian(&mut rng, y.len(), 1.0);
            let gy = tensor(y.dims(), r.clone());
            let (gx, gw, gb) = (self.backward)(&tensor(&[h, w, cin], x.clone()), &p, padding, stride, &gy)?;

            let n = x.len();
            worst = worst.max(compare(&mut x.clone(), gx.data(), 0..n, &mut |v| {
                Ok(dot(&r, conv2d_forward(&tensor(&[h, w, cin], v.to_vec()), &p, padding, stride)?.data()))
            })?);
            let input = tensor(&[h, w, cin], std::mem::take(&mut x));
            let mut wv = p.weights.clone();
            let n = wv.len();
            worst = worst.max(compare(&mut wv, &gw, 0..n, &mut |v| {
                let mut q = p.clone();
                q.weights = v.to_vec();
                Ok(dot(&r, conv2d_forward(&input, &q, padding, stride)?.data()))
            })?);
            let mut bv = p.bias.clone();
            worst = worst.max(compare(&mut bv, &gb, 0..cout, &mut |v| {
                let mut q = p.clone();
                q.bias = v.to_vec();
                Ok(dot(&r, conv2d_forward(&input, &q, padding, stride)?.data()))
            })?);
        }
        Ok((worst, String::new()))
    }
}

/// A fixture for negative controls: the true convolution backward with the
/// weight gradient scaled by 1.01.
pub fn perturbed_conv_backward(
    input: &Tensor<f64>,
    params: &ConvParams<f64>,
    padding: Padding,
    stride: usize,
    grad_out: &Tensor<f64>,
) -> Result<(Tensor<f64>, Vec<f64>, Vec<f64>)> {
    let (gx, mut gw, gb) = conv2d_backward(input, params, padding, stride, grad_out)?;
    gw.iter_mut().for_each(|v| *v *= 1.01);
    Ok((gx, gw, gb))
}

pub struct PoolCheck {
    kind: PoolKind,
}

impl PoolCheck {
    pub fn new(kind: PoolKind) -> Self {
        PoolCheck { kind }
    }
}

impl GradCheck for PoolCheck {
    fn name(&self) -> &str {
        match self.kind {
            PoolKind::Max => "max_pool",
            PoolKind::Average => "average_pool",
        }
    }

    fn measure(&self, seed: u64) -> Result<(f64, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (h, w, c) = (8, 9, 3);
        let specs = [
            PoolSpec::tiled(2, self.kind),
            PoolSpec::tiled(4, self.kind),
            PoolSpec::tiled(1, self.kind),
            PoolSpec::new(2, 4, self.kind),
        ];
        let mut worst = 0f64;
        for spec in specs {
            // Distinct values 0.01 apart keep every window's winner stable
            // under a step of STEP.
            let n = h * w * c;
            let mut x: Vec<f64> = sample(&mut rng, n, n).into_iter().map(|i| i as f64 * 0.01).collect();
            let (y, state) = pool_forward(&tensor(&[h, w, c], x.clone()), &spec)?;
            let r = gaussian(&mut rng, y.len(), 1.0);
            let gx = pool_backward(&spec, &state, &tensor(y.dims(), r.clone()))?;
            worst = worst.max(compare(&mut x, gx.data(), 0..n, &mut |v| {
                Ok(dot(&r, pool_forward(&tensor(&[h, w, c], v.to_vec()), &spec)?.0.data()))
            })?);
        }
        Ok((worst, String::new()))
    }
}

pub struct DenseCheck;

impl GradCheck for DenseCheck {
    fn name(&self) -> &str {
        "dense"
    }

    fn measure(&self, seed: u64) -> Result<(f64, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (fin, fout) = (7, 5);
        let mut x = gaussian(&mut rng, fin, 1.0);
        let mut p = DenseParams::<f64>::zeros(fin, fout);
        p.weights = gaussian(&mut rng, fin * fout, 0.5);
        p.bias = gaussian(&mut rng, fout, 0.5);
        let r = gaussian(&mut rng, fout, 1.0);
        let xt = tensor(&[fin], x.clone());
        let (gx, gw, gb) = dense_backward(&xt, &p, &tensor(&[fout], r.clone()))?;
        let mut worst = compare(&mut x, gx.data(), 0..fin, &mut |v| {
            Ok(dot(&r, dense_forward(&tensor(&[fin], v.to_vec()), &p)?.data()))
        })?;
        let mut wv = p.weights.clone();
        worst = worst.max(compare(&mut wv, &gw, 0..fin * fout, &mut |v| {
            let mut q = p.clone();
            q.weights = v.to_vec();
            Ok(dot(&r, dense_forward(&xt, &q)?.data()))
        })?);
        let mut bv = p.bias.clone();
        worst = worst.max(compare(&mut bv, &gb, 0..fout, &mut |v| {
            let mut q = p.clone();
            q.bias = v.to_vec();
            Ok(dot(&r, dense_forward(&xt, &q)?.data()))
        })?);
        Ok((worst, String::new()))
    }
}

/// Pointwise activation. Inputs of kinked activations are redrawn until
/// they sit at least 1e-3 from the kink.
pub struct ActivationCheck {
    name: String,
    act: Arc<dyn Activation>,
}

impl ActivationCheck {
    pub fn new(act: Arc<dyn Activation>) -> Self {
        ActivationCheck {
            name: format!("activation.{}", act.name()),
            act,
        }
    }
}

impl GradCheck for ActivationCheck {
    fn name(&self) -> &str {
        &self.name
    }

    fn measure(&self, seed: u64) -> Result<(f64, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 3.0).expect("positive std");
        let n = 200;
        let mut redrawn = 0;
        let mut x: Vec<f64> = (0..n)
            .map(|_| loop {
                let v: f64 = normal.sample(&mut rng);
                if !self.act.has_kinks() || v.abs() > 1e-3 {
                    break v;
                }
                redrawn += 1;
            })
            .collect();
        let r = gaussian(&mut rng, n, 1.0);
        let gx = activation_backward(&tensor(&[n], x.clone()), &tensor(&[n], r.clone()), self.act.as_ref())?;
        let act = self.act.as_ref();
        let worst = compare(&mut x, gx.data(), 0..n, &mut |v| {
            Ok(dot(&r, activation_forward(&tensor(&[n], v.to_vec()), act).data()))
        })?;
        let detail = if redrawn > 0 {
            format!("{redrawn} inputs redrawn away from the kink")
        } else {
            String::new()
        };
        Ok((worst, detail))
    }
}

/// Softmax followed by cross-entropy, differentiated with respect to the logits.
pub struct SoftmaxCrossEntropyCheck;

impl GradCheck for SoftmaxCrossEntropyCheck {
    fn name(&self) -> &str {
        "softmax_xent"
    }

    fn measure(&self, seed: u64) -> Result<(f64, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = 0f64;
        for k in [2, 4, 7] {
            let mut z = gaussian(&mut rng, k, 2.0);
            let label = rng.random_range(0..k);
            let (_, g) = cross_entropy_loss(&softmax(&tensor(&[k], z.clone()))?, label)?;
            worst = worst.max(compare(&mut z, g.data(), 0..k, &mut |v| {
                Ok(cross_entropy_loss(&softmax(&tensor(&[k], v.to_vec()))?, label)?.0)
            })?);
        }
        Ok((worst, String::new()))
    }
}

pub struct ConcatCheck;

impl GradCheck for ConcatCheck {
    fn name(&self) -> &str {
        "concat"
    }

    fn measure(&self, seed: u64) -> Result<(f64, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let widths = [2usize, 3, 1];
        let parts: Vec<Vec<f64>> = widths.iter().map(|&c| gaussian(&mut rng, 3 * 4 * c, 1.0)).collect();
        let total: usize = widths.iter().sum();
        let r = gaussian(&mut rng, 3 * 4 * total, 1.0);
        let grads = split_channels(&tensor(&[3, 4, total], r.clone()), &widths)?;
        let mut worst = 0f64;
        for (j, g) in grads.iter().enumerate() {
            let mut xj = parts[j].clone();
            let n = xj.len();
            worst = worst.max(compare(&mut xj, g.data(), 0..n, &mut |v| {
                let ts: Vec<Tensor<f64>> = parts
                    .iter()
                    .enumerate()
                    .map(|(i, p)| tensor(&[3, 4, widths[i]], if i == j { v.to_vec() } else { p.clone() }))
                    .collect();
                let refs: Vec<&Tensor<f64>> = ts.iter().collect();
                Ok(dot(&r, concat_channels(&refs)?.data()))
            })?);
        }
        Ok((worst, String::new()))
    }
}

/// Dropout with the mask held fixed by reseeding the generator per evaluation.
pub struct DropoutCheck;

impl GradCheck for DropoutCheck {
    fn name(&self) -> &str {
        "dropout"
    }

    fn measure(&self, seed: u64) -> Result<(f64, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 100;
        let rate = 0.3;
        let mut x = gaussian(&mut rng, n, 1.0);
        let r = gaussian(&mut rng, n, 1.0);
        let mask_seed = rng.random::<u64>();
        let (_, mask) = dropout(&tensor(&[n], x.clone()), rate, &mut ChaCha8Rng::seed_from_u64(mask_seed), true)?;
        let gx = dropout_backward(&mask.expect("training mode yields a mask"), &tensor(&[n], r.clone()))?;
        let worst = compare(&mut x, gx.data(), 0..n, &mut |v| {
            let mut g = ChaCha8Rng::seed_from_u64(mask_seed);
            Ok(dot(&r, dropout(&tensor(&[n], v.to_vec()), rate, &mut g, true)?.0.data()))
        })?;
        Ok((worst, String::new()))
    }
}

/// The full topology on a reduced square input, trained-mode loss (dropout
/// mask fixed), checked on a random subset of parameters. A coordinate is
/// discarded and redrawn when either perturbation crosses a kink (a ReLU
/// sign flip or a max-pool winner change), since the one-sided derivatives
/// differ there.
pub struct ModelCheck {
    name: String,
    act: Arc<dyn Activation>,
    side: usize,
    weights_per_block: usize,
    biases_per_block: usize,
}

impl ModelCheck {
    pub fn new(act: Arc<dyn Activation>) -> Self {
        ModelCheck {
            name: format!("model.{}", act.name()),
            act,
            side: REDUCED_SIDE,
            weights_per_block: 6,
            biases_per_block: 2,
        }
    }
}

impl GradCheck for ModelCheck {
    fn name(&self) -> &str {
        &self.name
    }

    fn tolerance(&self) -> f64 {
        MODEL_TOLERANCE
    }

    fn measure(&self, seed: u64) -> Result<(f64, String)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ModelConfig::new(4, self.act.clone()).with_input_side(self.side).with_seed(seed);
        let mut model = ModelGraph::<f64>::build(&cfg)?;
        // Non-zero biases so no layer starts exactly at a kink.
        for slice in model.param_slices_mut().into_iter().skip(1).step_by(2) {
            for b in slice.iter_mut() {
                *b = 0.05 * rng.sample::<f64, _>(StandardNormal);
            }
        }
        let image = tensor(
            &[self.side, self.side, 1],
            (0..self.side * self.side).map(|_| rng.random::<f64>()).collect(),
        );
        let label = rng.random_range(0..4);
        let mask_seed = rng.random::<u64>();

        let loss_at = |m: &ModelGraph<f64>| -> Result<(f64, Vec<usize>)> {
            let (probs, cache) = m.forward(&image, true, &mut ChaCha8Rng::seed_from_u64(mask_seed))?;
            Ok((cross_entropy_loss(&probs, label)?.0, cache.kink_signature(m)))
        };
        let (probs, cache) = model.forward(&image, true, &mut ChaCha8Rng::seed_from_u64(mask_seed))?;
        let base_sig = cache.kink_signature(&model);
        let (_, g) = cross_entropy_loss(&probs, label)?;
        let grads = model.backward(&cache, &g)?;
        let analytic: Vec<Vec<f64>> = grads.slices().into_iter().map(<[f64]>::to_vec).collect();

        let (mut worst, mut checked, mut skipped) = (0f64, 0usize, 0usize);
        for (b, grad) in analytic.iter().enumerate() {
            let want = if b % 2 == 0 { self.weights_per_block } else { self.biases_per_block }.min(grad.len());
            let mut candidates = sample(&mut rng, grad.len(), grad.len()).into_iter();
            let mut done = 0;
            while done < want {
                let Some(i) = candidates.next() else { break };
                let original = model.param_slices_mut()[b][i];
                model.param_slices_mut()[b][i] = original + STEP;
                let (plus, sig_plus) = loss_at(&model)?;
                model.param_slices_mut()[b][i] = original - STEP;
                let (minus, sig_minus) = loss_at(&model)?;
                model.param_slices_mut()[b][i] = original;
                if sig_plus != base_sig || sig_minus != base_sig {
                    skipped += 1;
                    continue;
                }
                worst = worst.max(rel_error(grad[i], (plus - minus) / (2.0 * STEP)));
                checked += 1;
                done += 1;
            }
        }
        Ok((worst, format!("{checked} coordinates, {skipped} redrawn at kinks")))
    }
}

/// Named set of checks; registering a check with an existing name replaces it.
#[derive(Default)]
pub struct GradCheckRegistry {
    checks: Vec<Box<dyn GradCheck>>,
}

impl GradCheckRegistry {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Every per-op check plus both reduced-model variants.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(ConvCheck::new()));
        r.register(Box::new(PoolCheck::new(PoolKind::Max)));
        r.register(Box::new(PoolCheck::new(PoolKind::Average)));
        r.register(Box::new(DenseCheck));
        r.register(Box::new(ActivationCheck::new(relu())));
        r.register(Box::new(ActivationCheck::new(swish())));
        r.register(Box::new(SoftmaxCrossEntropyCheck));
        r.register(Box::new(ConcatCheck));
        r.register(Box::new(DropoutCheck));
        r.register(Box::new(ModelCheck::new(relu())));
        r.register(Box::new(ModelCheck::new(swish())));
        r
    }

    pub fn register(&mut self, check: Box<dyn GradCheck>) {
        match self.checks.iter().position(|c| c.name() == check.name()) {
            Some(i) => self.checks[i] = check,
            None => self.checks.push(check),
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.checks.iter().map(|c| c.name()).collect()
    }

    pub fn run(&self, seed: u64) -> SuiteReport {
        SuiteReport {
            results: self.checks.iter().map(|c| c.run(seed)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub results: Vec<CheckResult>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.results.iter().find(|r| r.name == name)
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}

/// Runs the built-in checks.
pub fn gradient_check_suite(seed: u64) -> SuiteReport {
    GradCheckRegistry::builtin().run(seed)
}
