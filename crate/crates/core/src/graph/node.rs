use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::ops::{Activation, PoolKind, PoolSpec};
use crate::tensor::format_dims;

#[derive(Debug, Clone, PartialEq)]
pub enum LayerKind {
    Input,
    /// Same-padded, stride-1 convolution.
    Conv {
        kernel_h: usize,
        kernel_w: usize,
        filters: usize,
    },
    Pool(PoolSpec),
    Concat,
    Flatten,
    Dropout {
        rate: f64,
    },
    Dense {
        units: usize,
    },
}

impl LayerKind {
    pub fn type_name(&self) -> &'static str {
        match self {
            LayerKind::Input => "input",
            LayerKind::Conv { .. } => "conv",
            LayerKind::Pool(p) if p.kind == PoolKind::Max => "maxpool",
            LayerKind::Pool(_) => "avgpool",
            LayerKind::Concat => "concat",
            LayerKind::Flatten => "flatten",
            LayerKind::Dropout { .. } => "dropout",
            LayerKind::Dense { .. } => "dense",
        }
    }
}

#[derive(Clone)]
pub enum NodeActivation {
    None,
    Pointwise(Arc<dyn Activation>),
    Softmax,
}

impl NodeActivation {
    pub fn label(&self) -> &'static str {
        match self {
            NodeActivation::None => "",
            NodeActivation::Pointwise(a) => a.label(),
            NodeActivation::Softmax => "SoftMax",
        }
    }
}

impl fmt::Debug for NodeActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeActivation::None => write!(f, "None"),
            NodeActivation::Pointwise(a) => write!(f, "{}", a.name()),
            NodeActivation::Softmax => write!(f, "Softmax"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNode {
    pub id: String,
    /// Row label as printed in the model summary.
    pub label: String,
    pub kind: LayerKind,
    pub activation: NodeActivation,
    /// Upstream node ids, in the order their outputs are consumed.
    pub inputs: Vec<String>,
    pub(crate) input_idx: Vec<usize>,
    pub output_dims: Vec<usize>,
}

impl LayerNode {
    pub fn kernel_text(&self) -> String {
        match &self.kind {
            LayerKind::Conv {
                kernel_h, kernel_w, ..
            } => format!("{kernel_h}*{kernel_w}"),
            LayerKind::Pool(p) if p.stride_h == p.pool_h && p.stride_w == p.pool_w => {
                format!("Pool size=({},{})", p.pool_h, p.pool_w)
            }
            LayerKind::Pool(p) => format!(
                "Pool size=({},{}), stride={}",
                p.pool_h, p.pool_w, p.stride_h
            ),
            LayerKind::Concat => "Axis=3".to_string(),
            LayerKind::Dropout { rate } => format!("Rate={rate}"),
            _ => String::new(),
        }
    }

    pub fn shape_text(&self) -> String {
        match self.kind {
            LayerKind::Dense { units } => format!("(None, {units})"),
            LayerKind::Flatten | LayerKind::Dropout { .. } => self.output_dims[0].to_string(),
            _ => format_dims(&self.output_dims),
        }
    }

    /// `(weight count, bias count)` for parameterized layers.
    pub fn param_shape(&self, in_dims: &[usize]) -> Option<(Vec<usize>, usize)> {
        match self.kind {
            LayerKind::Conv {
                kernel_h,
                kernel_w,
                filters,
            } => Some((vec![kernel_h, kernel_w, in_dims[2], filters], filters)),
            LayerKind::Dense { units } => Some((vec![in_dims[0], units], units)),
            _ => None,
        }
    }
}

/// Incrementally assembles a layer DAG, inferring shapes as nodes are added.
pub struct GraphBuilder {
    pub(crate) nodes: Vec<LayerNode>,
    index: HashMap<String, usize>,
    pub(crate) conv_activation: Arc<dyn Activation>,
}

impl GraphBuilder {
    pub fn new(input_dims: [usize; 3], conv_activation: Arc<dyn Activation>) -> Self {
        let input = LayerNode {
            id: "input".into(),
            label: "Input".into(),
            kind: LayerKind::Input,
            activation: NodeActivation::None,
            inputs: Vec::new(),
            input_idx: Vec::new(),
            output_dims: input_dims.to_vec(),
        };
        GraphBuilder {
            index: HashMap::from([("input".to_string(), 0)]),
            nodes: vec![input],
            conv_activation,
        }
    }

    pub fn dims(&self, id: &str) -> Result<&[usize]> {
        let &i = self
            .index
            .get(id)
            .ok_or_else(|| Error::Build(format!("unknown node `{id}`")))?;
        Ok(&self.nodes[i].output_dims)
    }

    pub fn nodes(&self) -> &[LayerNode] {
        &self.nodes
    }

    pub fn conv(&mut self, id: &str, label: &str, kh: usize, kw: usize, filters: usize, input: &str) -> Result<String> {
        let act = NodeActivation::Pointwise(self.conv_activation.clone());
        self.add(
            id,
            label,
            LayerKind::Conv {
                kernel_h: kh,
                kernel_w: kw,
                filters,
            },
            act,
            &[input],
        )
    }

    pub fn add(
        &mut self,
        id: &str,
        label: &str,
        kind: LayerKind,
        activation: NodeActivation,
        inputs: &[&str],
    ) -> Result<String> {
        if self.index.contains_key(id) {
            return Err(Error::Build(format!("duplicate node id `{id}`")));
        }
        let mut input_idx = Vec::with_capacity(inputs.len());
        for name in inputs {
            let &i = self
                .index
                .get(*name)
                .ok_or_else(|| Error::Build(format!("node `{id}` reads unknown node `{name}`")))?;
            input_idx.push(i);
        }
        let in_dims: Vec<&[usize]> = input_idx
            .iter()
            .map(|&i| self.nodes[i].output_dims.as_slice())
            .collect();
        let output_dims = infer_dims(id, &kind, &in_dims)?;
        self.index.insert(id.to_string(), self.nodes.len());
        self.nodes.push(LayerNode {
            id: id.to_string(),
            label: label.to_string(),
            kind,
            activation,
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
            input_idx,
            output_dims,
        });
        Ok(id.to_string())
    }
}

fn infer_dims(id: &str, kind: &LayerKind, inputs: &[&[usize]]) -> Result<Vec<usize>> {
    let single = |rank: usize| -> Result<&[usize]> {
        match inputs {
            [d] if d.len() == rank => Ok(d),
            _ => Err(Error::Build(format!(
                "node `{id}` needs one rank-{rank} input, got {inputs:?}"
            ))),
        }
    };
    match kind {
        LayerKind::Input => Err(Error::Build("only the root may be an input node".into())),
        LayerKind::Conv { filters, .. } => {
            let d = single(3)?;
            Ok(vec![d[0], d[1], *filters])
        }
        LayerKind::Pool(spec) => {
            let d = single(3)?;
            let (h, w) = spec
                .output_extent(d[0], d[1])
                .map_err(|e| Error::Build(format!("node `{id}`: {e}")))?;
            Ok(vec![h, w, d[2]])
        }
        LayerKind::Concat => {
            if inputs.len() < 2 || inputs.iter().any(|d| d.len() != 3) {
                return Err(Error::Build(format!(
                    "concat `{id}` needs at least two feature maps"
                )));
            }
            let (h, w) = (inputs[0][0], inputs[0][1]);
            if inputs.iter().any(|d| d[0] != h || d[1] != w) {
                return Err(Error::Build(format!(
                    "concat `{id}` inputs disagree spatially: {inputs:?}"
                )));
            }
            Ok(vec![h, w, inputs.iter().map(|d| d[2]).sum()])
        }
        LayerKind::Flatten => Ok(vec![single(3)?.iter().product()]),
        LayerKind::Dropout { rate } => {
            if !(0.0..1.0).contains(rate) {
                return Err(Error::arg(format!("dropout rate must lie in [0, 1), got {rate}")));
            }
            match inputs {
                [d] => Ok(d.to_vec()),
                _ => Err(Error::Build(format!("dropout `{id}` needs one input"))),
            }
        }
        LayerKind::Dense { units } => {
            single(1)?;
            Ok(vec![*units])
        }
    }
}
