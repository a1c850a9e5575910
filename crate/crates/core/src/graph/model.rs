use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::blocks::{
    build_block_313, build_block_31c, build_fire_block, build_head, build_reduction_block,
    build_trunk,
};
use crate::graph::node::{GraphBuilder, LayerKind, LayerNode, NodeActivation};
use crate::ops::activation::{activation_backward, activation_forward};
use crate::ops::conv::conv2d_backward_with;
use crate::ops::{
    concat_channels, conv2d_forward, dense_backward, dense_forward, dropout, dropout_backward,
    pool_backward, pool_forward, softmax, split_channels, Activation, ConvParams, DenseParams,
    Padding, PoolState,
};
use crate::real::Real;
use crate::tensor::Tensor;

pub const INPUT_SHAPE: [usize; 3] = [224, 224, 1];
pub const DEFAULT_DROPOUT: f64 = 0.2;

/// Labels of the four view/region classes, in output order.
pub const DEFAULT_CLASS_NAMES: [&str; 4] = ["dv_upper", "dv_lower", "lat_upper", "lat_lower"];

/// [`DEFAULT_CLASS_NAMES`] for four classes, `class_0..` otherwise.
pub fn default_class_names(num_classes: usize) -> Vec<String> {
    if num_classes == DEFAULT_CLASS_NAMES.len() {
        DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect()
    } else {
        (0..num_classes).map(|k| format!("class_{k}")).collect()
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub input_shape: [usize; 3],
    pub num_classes: usize,
    pub conv_activation: Arc<dyn Activation>,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl ModelConfig {
    pub fn new(num_classes: usize, conv_activation: Arc<dyn Activation>) -> Self {
        ModelConfig {
            input_shape: INPUT_SHAPE,
            num_classes,
            conv_activation,
            dropout_rate: DEFAULT_DROPOUT,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_dropout(mut self, rate: f64) -> Self {
        self.dropout_rate = rate;
        self
    }

    /// Same topology on a smaller square single-channel input. The two
    /// stride-4 pools and the 2x2/stride-4 average pool need a side of at
    /// least 32.
    pub fn with_input_side(mut self, side: usize) -> Self {
        self.input_shape = [side, side, 1];
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeParams<T = f32> {
    None,
    Conv(ConvParams<T>),
    Dense(DenseParams<T>),
}

impl<T: Real> NodeParams<T> {
    pub fn count(&self) -> usize {
        match self {
            NodeParams::None => 0,
            NodeParams::Conv(p) => p.param_count(),
            NodeParams::Dense(p) => p.param_count(),
        }
    }

    fn buffers(&self) -> Option<(&[T], &[T])> {
        match self {
            NodeParams::None => None,
            NodeParams::Conv(p) => Some((&p.weights, &p.bias)),
            NodeParams::Dense(p) => Some((&p.weights, &p.bias)),
        }
    }

    fn buffers_mut(&mut self) -> Option<(&mut Vec<T>, &mut Vec<T>)> {
        match self {
            NodeParams::None => None,
            NodeParams::Conv(p) => Some((&mut p.weights, &mut p.bias)),
            NodeParams::Dense(p) => Some((&mut p.weights, &mut p.bias)),
        }
    }
}

/// The layer DAG with its parameters.
#[derive(Debug, Clone)]
pub struct ModelGraph<T = f32> {
    nodes: Vec<LayerNode>,
    params: Vec<NodeParams<T>>,
    input_shape: [usize; 3],
    num_classes: usize,
    conv_activation: Arc<dyn Activation>,
    dropout_rate: f64,
    class_names: Vec<String>,
}

/// Builds the full-size network (224x224x1 input) in 32-bit precision.
pub fn build_model(
    num_classes: usize,
    conv_activation: Arc<dyn Activation>,
    dropout_rate: f64,
    seed: u64,
) -> Result<ModelGraph<f32>> {
    ModelGraph::build(
        &ModelConfig::new(num_classes, conv_activation)
            .with_dropout(dropout_rate)
            .with_seed(seed),
    )
}

/// Assembles the layer DAG without parameters.
pub fn build_topology(cfg: &ModelConfig) -> Result<GraphBuilder> {
    if cfg.num_classes < 2 {
        return Err(Error::arg(format!(
            "a classifier needs at least 2 classes, got {}",
            cfg.num_classes
        )));
    }
    let mut g = GraphBuilder::new(cfg.input_shape, cfg.conv_activation.clone());
    let x = build_fire_block(&mut g, "input")?;
    let x = build_block_313(&mut g, &x)?;
    let x = build_trunk(&mut g, &x)?;
    let x = build_reduction_block(&mut g, &x)?;
    let x = build_block_31c(&mut g, &x)?;
    build_head(&mut g, &x, cfg.num_classes, cfg.dropout_rate)?;
    Ok(g)
}

impl<T: Real> ModelGraph<T> {
    /// Builds the network and draws He-normal weights (zero biases) from `cfg.seed`.
    pub fn build(cfg: &ModelConfig) -> Result<Self> {
        let g = build_topology(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let nodes = g.nodes;
        let mut params = Vec::with_capacity(nodes.len());
        for node in &nodes {
            let in_dims = node
                .input_idx
                .first()
                .map(|&i| nodes[i].output_dims.as_slice())
                .unwrap_or(&[]);
            let p = match node.kind {
                LayerKind::Conv {
                    kernel_h,
                    kernel_w,
                    filters,
                } => {
                    let mut p = ConvParams::zeros(kernel_h, kernel_w, in_dims[2], filters);
                    he_fill(&mut p.weights, kernel_h * kernel_w * in_dims[2], &mut rng);
                    NodeParams::Conv(p)
                }
                LayerKind::Dense { units } => {
                    let mut p = DenseParams::zeros(in_dims[0], units);
                    he_fill(&mut p.weights, in_dims[0], &mut rng);
                    NodeParams::Dense(p)
                }
                _ => NodeParams::None,
            };
            params.push(p);
        }
        Ok(ModelGraph {
            nodes,
            params,
            input_shape: cfg.input_shape,
            num_classes: cfg.num_classes,
            conv_activation: cfg.conv_activation.clone(),
            dropout_rate: cfg.dropout_rate,
            class_names: default_class_names(cfg.num_classes),
        })
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&LayerNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn params(&self, id: &str) -> Option<&NodeParams<T>> {
        let i = self.nodes.iter().position(|n| n.id == id)?;
        Some(&self.params[i])
    }

    pub fn params_mut(&mut self, id: &str) -> Option<&mut NodeParams<T>> {
        let i = self.nodes.iter().position(|n| n.id == id)?;
        Some(&mut self.params[i])
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn conv_activation(&self) -> &Arc<dyn Activation> {
        &self.conv_activation
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn set_class_names(&mut self, names: Vec<String>) -> Result<()> {
        if names.len() != self.num_classes {
            return Err(Error::arg(format!(
                "{} class names given for a {}-class model",
                names.len(),
                self.num_classes
            )));
        }
        self.class_names = names;
        Ok(())
    }

    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            conv_activation: self.conv_activation.clone(),
            dropout_rate: self.dropout_rate,
            seed: 0,
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(NodeParams::count).sum()
    }

    pub fn node_param_count(&self, id: &str) -> usize {
        self.params(id).map(NodeParams::count).unwrap_or(0)
    }

    /// `(node id, weights, bias)` for every parameterized node, in declaration order.
    pub fn param_blocks(&self) -> Vec<(&str, &[T], &[T])> {
        self.nodes
            .iter()
            .zip(&self.params)
            .filter_map(|(n, p)| p.buffers().map(|(w, b)| (n.id.as_str(), w, b)))
            .collect()
    }

    /// Flat parameter buffers (weights then bias per node), in declaration order.
    pub fn param_slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for p in &mut self.params {
            if let Some((w, b)) = p.buffers_mut() {
                out.push(w.as_mut_slice());
                out.push(b.as_mut_slice());
            }
        }
        out
    }

    pub fn cast<U: Real>(&self) -> ModelGraph<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64_lossy(x.as_f64())).collect();
        let params = self
            .params
            .iter()
            .map(|p| match p {
                NodeParams::None => NodeParams::None,
                NodeParams::Conv(c) => NodeParams::Conv(ConvParams {
                    kernel_h: c.kernel_h,
                    kernel_w: c.kernel_w,
                    in_channels: c.in_channels,
                    out_channels: c.out_channels,
                    weights: conv(&c.weights),
                    bias: conv(&c.bias),
                }),
                NodeParams::Dense(d) => NodeParams::Dense(DenseParams {
                    in_features: d.in_features,
                    out_features: d.out_features,
                    weights: conv(&d.weights),
                    bias: conv(&d.bias),
                }),
            })
            .collect();
        ModelGraph {
            nodes: self.nodes.clone(),
            params,
            input_shape: self.input_shape,
            num_classes: self.num_classes,
            conv_activation: self.conv_activation.clone(),
            dropout_rate: self.dropout_rate,
            class_names: self.class_names.clone(),
        }
    }

    /// Inference-mode forward pass returning class probabilities.
    pub fn infer(&self, image: &Tensor<T>) -> Result<Tensor<T>> {
        self.run(image, None).map(|(p, _)| p)
    }

    /// Forward pass. In training mode dropout draws from `rng` and the
    /// returned cache holds everything [`ModelGraph::backward`] needs; in
    /// inference mode `rng` is never touched.
    pub fn forward<R: RngCore>(
        &self,
        image: &Tensor<T>,
        training: bool,
        rng: &mut R,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        if training {
            self.run(image, Some(rng))
        } else {
            self.run(image, None)
        }
    }

    fn run(
        &self,
        image: &Tensor<T>,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<(Tensor<T>, ForwardCache<T>)> {
        if image.dims() != self.input_shape {
            return Err(Error::shape(format!(
                "model expects input {:?}, got {:?}",
                self.input_shape,
                image.dims()
            )));
        }
        let training = rng.is_some();
        let n = self.nodes.len();
        let mut remaining: Vec<usize> = vec![0; n];
        for node in &self.nodes {
            for &i in &node.input_idx {
                remaining[i] += 1;
            }
        }
        let mut cache = ForwardCache {
            outputs: vec![None; n],
            pre: vec![None; n],
            pool: vec![None; n],
            masks: vec![None; n],
            trace: Vec::with_capacity(n),
            training,
        };
        for (i, node) in self.nodes.iter().enumerate() {
            let input = |k: usize| -> &Tensor<T> {
                cache.outputs[node.input_idx[k]]
                    .as_ref()
                    .expect("topological order keeps inputs alive")
            };
            let (out, pre) = match (&node.kind, &self.params[i]) {
                (LayerKind::Input, _) => (image.clone(), None),
                (LayerKind::Conv { .. }, NodeParams::Conv(p)) => {
                    let pre = conv2d_forward(input(0), p, Padding::Same, 1)?;
                    let out = apply_activation(&node.activation, &pre)?;
                    (out, Some(pre))
                }
                (LayerKind::Dense { .. }, NodeParams::Dense(p)) => {
                    let pre = dense_forward(input(0), p)?;
                    let out = apply_activation(&node.activation, &pre)?;
                    (out, Some(pre))
                }
                (LayerKind::Pool(spec), _) => {
                    let (out, state) = pool_forward(input(0), spec)?;
                    if training {
                        cache.pool[i] = Some(state);
                    }
                    (out, None)
                }
                (LayerKind::Concat, _) => {
                    let parts: Vec<&Tensor<T>> =
                        (0..node.input_idx.len()).map(input).collect();
                    (concat_channels(&parts)?, None)
                }
                (LayerKind::Flatten, _) => {
                    let x = input(0);
                    (x.clone().reshaped(&[x.len()])?, None)
                }
                (LayerKind::Dropout { rate }, _) => match rng.as_deref_mut() {
                    Some(r) => {
                        let (out, mask) = dropout(input(0), *rate, r, true)?;
                        cache.masks[i] = mask;
                        (out, None)
                    }
                    None => (input(0).clone(), None),
                },
                (kind, _) => {
                    return Err(Error::State(format!(
                        "node `{}` ({}) has no parameters",
                        node.id,
                        kind.type_name()
                    )))
                }
            };
            if !out.is_finite() {
                return Err(Error::Numeric {
                    node: node.id.clone(),
                });
            }
            cache.trace.push((node.id.clone(), out.dims().to_vec()));
            if training {
                cache.pre[i] = pre;
            } else {
                for &k in &node.input_idx {
                    remaining[k] -= 1;
                    if remaining[k] == 0 {
                        cache.outputs[k] = None;
                    }
                }
            }
            cache.outputs[i] = Some(out);
        }
        let probs = cache.outputs[n - 1].clone().expect("output node evaluated");
        Ok((probs, cache))
    }

    /// Backpropagates `grad_logits` (gradient of the loss with respect to the
    /// final pre-softmax values) through a training-mode cache.
    pub fn backward(&self, cache: &ForwardCache<T>, grad_logits: &Tensor<T>) -> Result<Gradients<T>> {
        if !cache.training || cache.outputs.len() != self.nodes.len() {
            return Err(Error::State(
                "backward needs the cache of a training-mode forward pass on this model".into(),
            ));
        }
        let n = self.nodes.len();
        if grad_logits.dims() != [self.num_classes] {
            return Err(Error::shape(format!(
                "logit gradient has dims {:?}, expected [{}]",
                grad_logits.dims(),
                self.num_classes
            )));
        }
        let mut grads = Gradients::zeros_like(self);
        let mut flowing: Vec<Option<Tensor<T>>> = vec![None; n];
        flowing[n - 1] = Some(grad_logits.clone());
        for i in (0..n).rev() {
            let node = &self.nodes[i];
            let Some(g) = flowing[i].take() else { continue };
            let input = |k: usize| -> Result<&Tensor<T>> {
                cache.outputs[node.input_idx[k]]
                    .as_ref()
                    .ok_or_else(|| Error::State(format!("cache lacks input of `{}`", node.id)))
            };
            let pre = || -> Result<&Tensor<T>> {
                cache.pre[i]
                    .as_ref()
                    .ok_or_else(|| Error::State(format!("cache lacks pre-activation of `{}`", node.id)))
            };
            let upstream: Vec<Tensor<T>> = match (&node.kind, &self.params[i]) {
                (LayerKind::Input, _) => Vec::new(),
                (LayerKind::Conv { .. }, NodeParams::Conv(p)) => {
                    let g_pre = activation_grad(&node.activation, pre()?, &g, i == n - 1)?;
                    let reads_image = matches!(self.nodes[node.input_idx[0]].kind, LayerKind::Input);
                    let cg = conv2d_backward_with(input(0)?, p, Padding::Same, 1, &g_pre, !reads_image)?;
                    grads.accumulate(i, &cg.weights, &cg.bias);
                    cg.input.into_iter().collect()
                }
                (LayerKind::Dense { .. }, NodeParams::Dense(p)) => {
                    let g_pre = activation_grad(&node.activation, pre()?, &g, i == n - 1)?;
                    let (gx, gw, gb) = dense_backward(input(0)?, p, &g_pre)?;
                    grads.accumulate(i, &gw, &gb);
                    vec![gx]
                }
                (LayerKind::Pool(spec), _) => {
                    let state = cache.pool[i]
                        .as_ref()
                        .ok_or_else(|| Error::State(format!("cache lacks pool state of `{}`", node.id)))?;
                    vec![pool_backward(spec, state, &g)?]
                }
                (LayerKind::Concat, _) => {
                    let widths: Vec<usize> = node
                        .input_idx
                        .iter()
                        .map(|&k| self.nodes[k].output_dims[2])
                        .collect();
                    split_channels(&g, &widths)?
                }
                (LayerKind::Flatten, _) => {
                    vec![g.reshaped(&self.nodes[node.input_idx[0]].output_dims)?]
                }
                (LayerKind::Dropout { .. }, _) => match &cache.masks[i] {
                    Some(mask) => vec![dropout_backward(mask, &g)?],
                    None => vec![g],
                },
                (kind, _) => {
                    return Err(Error::State(format!(
                        "node `{}` ({}) has no parameters",
                        node.id,
                        kind.type_name()
                    )))
                }
            };
            for (k, gin) in node.input_idx.iter().zip(upstream) {
                match &mut flowing[*k] {
                    Some(acc) => acc.add_assign(&gin)?,
                    slot @ None => *slot = Some(gin),
                }
            }
        }
        Ok(grads)
    }
}

fn he_fill<T: Real>(buf: &mut [T], fan_in: usize, rng: &mut ChaCha8Rng) {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    for w in buf {
        *w = T::from_f64_lossy(normal.sample(rng));
    }
}

fn apply_activation<T: Real>(act: &NodeActivation, pre: &Tensor<T>) -> Result<Tensor<T>> {
    match act {
        NodeActivation::None => Ok(pre.clone()),
        NodeActivation::Pointwise(a) => Ok(activation_forward(pre, a.as_ref())),
        NodeActivation::Softmax => softmax(pre),
    }
}

fn activation_grad<T: Real>(
    act: &NodeActivation,
    pre: &Tensor<T>,
    g: &Tensor<T>,
    is_output: bool,
) -> Result<Tensor<T>> {
    match act {
        NodeActivation::None => Ok(g.clone()),
        NodeActivation::Pointwise(a) => activation_backward(pre, g, a.as_ref()),
        // The output gradient arrives already taken with respect to the logits.
        NodeActivation::Softmax if is_output => Ok(g.clone()),
        NodeActivation::Softmax => Err(Error::State(
            "softmax is only supported on the output node".into(),
        )),
    }
}

/// Intermediate values recorded by a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache<T = f32> {
    pub(crate) outputs: Vec<Option<Tensor<T>>>,
    pub(crate) pre: Vec<Option<Tensor<T>>>,
    pub(crate) pool: Vec<Option<PoolState>>,
    pub(crate) masks: Vec<Option<Vec<T>>>,
    trace: Vec<(String, Vec<usize>)>,
    training: bool,
}

impl<T: Real> ForwardCache<T> {
    /// `(node id, output dims)` in evaluation order.
    pub fn trace(&self) -> &[(String, Vec<usize>)] {
        &self.trace
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    /// Output of a node, available for every node after a training pass.
    pub fn output(&self, model: &ModelGraph<T>, id: &str) -> Option<&Tensor<T>> {
        let i = model.nodes.iter().position(|n| n.id == id)?;
        self.outputs[i].as_ref()
    }

    /// Logits feeding the final softmax.
    pub fn logits(&self) -> Option<&Tensor<T>> {
        self.pre.last().and_then(|p| p.as_ref())
    }

    /// Which side of every kink the pass landed on: the sign pattern of
    /// pre-activations feeding kinked activations plus every max-pool
    /// winner. Two passes with equal signatures evaluate the same smooth
    /// piece of the network.
    pub fn kink_signature(&self, model: &ModelGraph<T>) -> Vec<usize> {
        let mut sig = Vec::new();
        for (i, node) in model.nodes.iter().enumerate() {
            if let NodeActivation::Pointwise(a) = &node.activation {
                if a.has_kinks() {
                    if let Some(pre) = &self.pre[i] {
                        sig.extend(pre.data().iter().map(|&v| usize::from(v > T::zero())));
                    }
                }
            }
            if let Some(PoolState {
                argmax: Some(idx), ..
            }) = &self.pool[i]
            {
                sig.extend_from_slice(idx);
            }
        }
        sig
    }

    /// Smallest `|pre-activation|` among kinked activations.
    pub fn min_kink_distance(&self, model: &ModelGraph<T>) -> f64 {
        let mut best = f64::INFINITY;
        for (i, node) in model.nodes.iter().enumerate() {
            if let NodeActivation::Pointwise(a) = &node.activation {
                if a.has_kinks() {
                    if let Some(pre) = &self.pre[i] {
                        for v in pre.data() {
                            best = best.min(v.as_f64().abs());
                        }
                    }
                }
            }
        }
        best
    }
}

/// Parameter gradients keyed by node id, in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T = f32> {
    entries: Vec<GradEntry<T>>,
}

#[derive(Debug, Clone, PartialEq)]
struct GradEntry<T> {
    node: usize,
    id: String,
    weights: Vec<T>,
    bias: Vec<T>,
}

impl<T: Real> Gradients<T> {
    pub fn zeros_like(model: &ModelGraph<T>) -> Self {
        let entries = model
            .nodes
            .iter()
            .zip(&model.params)
            .enumerate()
            .filter_map(|(i, (n, p))| {
                p.buffers().map(|(w, b)| GradEntry {
                    node: i,
                    id: n.id.clone(),
                    weights: vec![T::zero(); w.len()],
                    bias: vec![T::zero(); b.len()],
                })
            })
            .collect();
        Gradients { entries }
    }

    fn accumulate(&mut self, node: usize, w: &[T], b: &[T]) {
        let e = self
            .entries
            .iter_mut()
            .find(|e| e.node == node)
            .expect("gradient slot for parameterized node");
        for (a, &v) in e.weights.iter_mut().zip(w) {
            *a = *a + v;
        }
        for (a, &v) in e.bias.iter_mut().zip(b) {
            *a = *a + v;
        }
    }

    /// `(weights, bias)` gradient of a node.
    pub fn get(&self, id: &str) -> Option<(&[T], &[T])> {
        self.entries
            .iter()
            .find(|e| e.id == id)
            .map(|e| (e.weights.as_slice(), e.bias.as_slice()))
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    /// Flat buffers aligned with [`ModelGraph::param_slices_mut`].
    pub fn slices(&self) -> Vec<&[T]> {
        self.entries
            .iter()
            .flat_map(|e| [e.weights.as_slice(), e.bias.as_slice()])
            .collect()
    }

    pub fn add_assign(&mut self, other: &Gradients<T>) {
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            for (x, &y) in a.weights.iter_mut().zip(&b.weights) {
                *x = *x + y;
            }
            for (x, &y) in a.bias.iter_mut().zip(&b.bias) {
                *x = *x + y;
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for e in &mut self.entries {
            e.weights.iter_mut().chain(e.bias.iter_mut()).for_each(|v| *v = *v * factor);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.entries
            .iter()
            .all(|e| e.weights.iter().chain(&e.bias).all(|v| *v == T::zero()))
    }
}
