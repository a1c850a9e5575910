use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    Average,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub pool_h: usize,
    pub pool_w: usize,
    pub stride_h: usize,
    pub stride_w: usize,
    pub kind: PoolKind,
}

impl PoolSpec {
    /// Square window whose stride equals its size.
    pub fn tiled(size: usize, kind: PoolKind) -> Self {
        PoolSpec {
            pool_h: size,
            pool_w: size,
            stride_h: size,
            stride_w: size,
            kind,
        }
    }

    pub fn new(pool: usize, stride: usize, kind: PoolKind) -> Self {
        PoolSpec {
            pool_h: pool,
            pool_w: pool,
            stride_h: stride,
            stride_w: stride,
            kind,
        }
    }

    pub fn output_extent(&self, in_h: usize, in_w: usize) -> Result<(usize, usize)> {
        if self.pool_h == 0 || self.pool_w == 0 || self.stride_h == 0 || self.stride_w == 0 {
            return Err(Error::arg("pool size and stride must be positive"));
        }
        if in_h < self.pool_h || in_w < self.pool_w {
            return Err(Error::shape(format!(
                "{}x{} pool window does not fit a {in_h}x{in_w} input",
                self.pool_h, self.pool_w
            )));
        }
        Ok((
            (in_h - self.pool_h) / self.stride_h + 1,
            (in_w - self.pool_w) / self.stride_w + 1,
        ))
    }
}

/// What the backward pass needs from a forward pooling call.
#[derive(Debug, Clone)]
pub struct PoolState {
    pub input_dims: [usize; 3],
    /// Flat input index of each output element's winner (max pooling only).
    pub argmax: Option<Vec<usize>>,
}

pub fn pool_forward<T: Real>(input: &Tensor<T>, spec: &PoolSpec) -> Result<(Tensor<T>, PoolState)> {
    let (h, w, c) = input.hwc()?;
    let (oh, ow) = spec.output_extent(h, w)?;
    let x = input.data();
    let mut out = vec![T::zero(); oh * ow * c];
    let mut argmax = match spec.kind {
        PoolKind::Max => Some(vec![0usize; oh * ow * c]),
        PoolKind::Average => None,
    };
    let area = T::from_usize(spec.pool_h * spec.pool_w).unwrap();
    for oy in 0..oh {
        for ox in 0..ow {
            let y0 = oy * spec.stride_h;
            let x0 = ox * spec.stride_w;
            for ch in 0..c {
                let o = (oy * ow + ox) * c + ch;
                match spec.kind {
                    PoolKind::Max => {
                        let mut best = (y0 * w + x0) * c + ch;
                        for y in y0..y0 + spec.pool_h {
                            for xx in x0..x0 + spec.pool_w {
                                let i = (y * w + xx) * c + ch;
                                // strict comparison keeps the first maximum in scan order
                                if x[i] > x[best] {
                                    best = i;
                                }
                            }
                        }
                        out[o] = x[best];
                        argmax.as_mut().unwrap()[o] = best;
                    }
                    PoolKind::Average => {
                        let mut sum = T::zero();
                        for y in y0..y0 + spec.pool_h {
                            for xx in x0..x0 + spec.pool_w {
                                sum = sum + x[(y * w + xx) * c + ch];
                            }
                        }
                        out[o] = sum / area;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::from_vec(&[oh, ow, c], out)?,
        PoolState {
            input_dims: [h, w, c],
            argmax,
        },
    ))
}

pub fn pool_backward<T: Real>(
    spec: &PoolSpec,
    state: &PoolState,
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    let [h, w, c] = state.input_dims;
    let (oh, ow) = spec.output_extent(h, w)?;
    if grad_out.dims() != [oh, ow, c] {
        return Err(Error::shape(format!(
            "pool gradient has dims {:?}, expected {:?}",
            grad_out.dims(),
            [oh, ow, c]
        )));
    }
    let g = grad_out.data();
    let mut gi = vec![T::zero(); h * w * c];
    match spec.kind {
        PoolKind::Max => {
            let argmax = state
                .argmax
                .as_ref()
                .ok_or_else(|| Error::State("max pool state carries no argmax".into()))?;
            if argmax.len() != g.len() {
                return Err(Error::State("max pool state does not match gradient".into()));
            }
            for (&src, &v) in argmax.iter().zip(g) {
                gi[src] = gi[src] + v;
            }
        }
        PoolKind::Average => {
            let area = T::from_usize(spec.pool_h * spec.pool_w).unwrap();
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let share = g[(oy * ow + ox) * c + ch] / area;
                        for y in oy * spec.stride_h..oy * spec.stride_h + spec.pool_h {
                            for x in ox * spec.stride_w..ox * spec.stride_w + spec.pool_w {
                                let i = (y * w + x) * c + ch;
                                gi[i] = gi[i] + share;
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[h, w, c], gi)
}
