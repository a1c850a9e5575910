//! 2-D convolution over `(height, width, channels)` maps, lowered to a matrix
//! product through an im2col buffer.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Padding {
    /// Zero padding that keeps the spatial extent unchanged at stride 1.
    Same,
    Valid,
}

/// Kernel weights laid out `(kernel_h, kernel_w, in_channels, out_channels)`,
/// so the flat buffer is directly a `(kh*kw*cin) x cout` row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvParams<T = f32> {
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> ConvParams<T> {
    pub fn zeros(kernel_h: usize, kernel_w: usize, in_channels: usize, out_channels: usize) -> Self {
        ConvParams {
            kernel_h,
            kernel_w,
            in_channels,
            out_channels,
            weights: vec![T::zero(); kernel_h * kernel_w * in_channels * out_channels],
            bias: vec![T::zero(); out_channels],
        }
    }

    pub fn param_count(&self) -> usize {
        self.kernel_h * self.kernel_w * self.in_channels * self.out_channels + self.out_channels
    }

    fn patch_len(&self) -> usize {
        self.kernel_h * self.kernel_w * self.in_channels
    }

    pub fn weight(&self, ky: usize, kx: usize, ci: usize, co: usize) -> T {
        self.weights[((ky * self.kernel_w + kx) * self.in_channels + ci) * self.out_channels + co]
    }
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
    pad_top: usize,
    pad_left: usize,
    stride: usize,
}

fn geometry<T: Real>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    padding: Padding,
    stride: usize,
) -> Result<Geometry> {
    let (h, w, c) = input.hwc()?;
    if stride == 0 {
        return Err(Error::arg("convolution stride must be positive"));
    }
    if c != params.in_channels {
        return Err(Error::shape(format!(
            "convolution expects {} input channels, got {c}",
            params.in_channels
        )));
    }
    if params.weights.len() != params.patch_len() * params.out_channels
        || params.bias.len() != params.out_channels
    {
        return Err(Error::shape("convolution parameter buffers do not match their extents"));
    }
    match padding {
        Padding::Same => {
            if stride != 1 {
                return Err(Error::arg("same padding is only supported at stride 1"));
            }
            Ok(Geometry {
                in_h: h,
                in_w: w,
                out_h: h,
                out_w: w,
                pad_top: (params.kernel_h - 1) / 2,
                pad_left: (params.kernel_w - 1) / 2,
                stride,
            })
        }
        Padding::Valid => {
            if h < params.kernel_h || w < params.kernel_w {
                return Err(Error::shape(format!(
                    "{}x{} kernel does not fit a {h}x{w} input",
                    params.kernel_h, params.kernel_w
                )));
            }
            Ok(Geometry {
                in_h: h,
                in_w: w,
                out_h: (h - params.kernel_h) / stride + 1,
                out_w: (w - params.kernel_w) / stride + 1,
                pad_top: 0,
                pad_left: 0,
                stride,
            })
        }
    }
}

impl Geometry {
    fn is_pointwise<T: Real>(&self, params: &ConvParams<T>) -> bool {
        params.kernel_h == 1 && params.kernel_w == 1 && self.stride == 1
    }

    /// Input column range `[lo, hi)` touched by kernel column 0 when sliding
    /// to output column `ox`, clipped to the image, with the matching kernel
    /// offset of `lo`.
    fn col_span(&self, ox: usize, kernel_w: usize) -> (usize, usize, usize) {
        let start = (ox * self.stride) as isize - self.pad_left as isize;
        let lo = start.max(0) as usize;
        let hi = ((start + kernel_w as isize).min(self.in_w as isize)).max(0) as usize;
        (lo, hi.max(lo), (lo as isize - start) as usize)
    }
}

fn im2col<T: Real>(input: &[T], g: &Geometry, params: &ConvParams<T>) -> Vec<T> {
    let cin = params.in_channels;
    let patch = params.patch_len();
    let row_stride = params.kernel_w * cin;
    let mut col = vec![T::zero(); g.out_h * g.out_w * patch];
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &mut col[(oy * g.out_w + ox) * patch..][..patch];
            let (lo, hi, kx0) = g.col_span(ox, params.kernel_w);
            if lo == hi {
                continue;
            }
            for ky in 0..params.kernel_h {
                let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                if iy < 0 || iy as usize >= g.in_h {
                    continue;
                }
                let src = &input[(iy as usize * g.in_w + lo) * cin..(iy as usize * g.in_w + hi) * cin];
                row[ky * row_stride + kx0 * cin..][..src.len()].copy_from_slice(src);
            }
        }
    }
    col
}

fn col2im<T: Real>(col: &[T], g: &Geometry, params: &ConvParams<T>, grad_input: &mut [T]) {
    let cin = params.in_channels;
    let patch = params.patch_len();
    let row_stride = params.kernel_w * cin;
    for oy in 0..g.out_h {
        for ox in 0..g.out_w {
            let row = &col[(oy * g.out_w + ox) * patch..][..patch];
            let (lo, hi, kx0) = g.col_span(ox, params.kernel_w);
            if lo == hi {
                continue;
            }
            for ky in 0..params.kernel_h {
                let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                if iy < 0 || iy as usize >= g.in_h {
                    continue;
                }
                let dst = &mut grad_input
                    [(iy as usize * g.in_w + lo) * cin..(iy as usize * g.in_w + hi) * cin];
                let src = &row[ky * row_stride + kx0 * cin..][..dst.len()];
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = *d + s;
                }
            }
        }
    }
}

/// Linear convolution output (no activation).
pub fn conv2d_forward<T: Real>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    padding: Padding,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = geometry(input, params, padding, stride)?;
    let cout = params.out_channels;
    let pixels = g.out_h * g.out_w;
    let mut out = Vec::with_capacity(pixels * cout);
    for _ in 0..pixels {
        out.extend_from_slice(&params.bias);
    }
    let patch = params.patch_len();
    let owned;
    let col: &[T] = if g.is_pointwise(params) {
        input.data()
    } else {
        owned = im2col(input.data(), &g, params);
        &owned
    };
    T::gemm(
        pixels,
        patch,
        cout,
        T::one(),
        col,
        patch as isize,
        1,
        &params.weights,
        cout as isize,
        1,
        T::one(),
        &mut out,
        cout as isize,
        1,
    );
    Tensor::from_vec(&[g.out_h, g.out_w, cout], out)
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T = f32> {
    pub input: Option<Tensor<T>>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Exact gradients of [`conv2d_forward`] with respect to input, weights and bias.
pub fn conv2d_backward<T: Real>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    padding: Padding,
    stride: usize,
    grad_out: &Tensor<T>,
) -> Result<(Tensor<T>, Vec<T>, Vec<T>)> {
    let g = conv2d_backward_with(input, params, padding, stride, grad_out, true)?;
    Ok((g.input.expect("requested input gradient"), g.weights, g.bias))
}

/// Like [`conv2d_backward`], optionally skipping the input gradient (for
/// layers reading the network input directly).
pub fn conv2d_backward_with<T: Real>(
    input: &Tensor<T>,
    params: &ConvParams<T>,
    padding: Padding,
    stride: usize,
    grad_out: &Tensor<T>,
    need_input: bool,
) -> Result<ConvGrads<T>> {
    let g = geometry(input, params, padding, stride)?;
    let cout = params.out_channels;
    if grad_out.dims() != [g.out_h, g.out_w, cout] {
        return Err(Error::shape(format!(
            "convolution gradient has dims {:?}, expected {:?}",
            grad_out.dims(),
            [g.out_h, g.out_w, cout]
        )));
    }
    let pixels = g.out_h * g.out_w;
    let patch = params.patch_len();
    let go = grad_out.data();

    let mut grad_bias = vec![T::zero(); cout];
    for px in go.chunks_exact(cout) {
        for (b, &v) in grad_bias.iter_mut().zip(px) {
            *b = *b + v;
        }
    }

    let pointwise = g.is_pointwise(params);
    let owned;
    let col: &[T] = if pointwise {
        input.data()
    } else {
        owned = im2col(input.data(), &g, params);
        &owned
    };
    let mut grad_w = vec![T::zero(); patch * cout];
    // colᵀ (patch x pixels) · grad_out (pixels x cout)
    T::gemm(
        patch,
        pixels,
        cout,
        T::one(),
        col,
        1,
        patch as isize,
        go,
        cout as isize,
        1,
        T::zero(),
        &mut grad_w,
        cout as isize,
        1,
    );

    let grad_input = if need_input {
        let mut gcol = vec![T::zero(); pixels * patch];
        let mut wt = vec![T::zero(); patch * cout];
        for (k, row) in params.weights.chunks_exact(cout).enumerate() {
            for (co, &v) in row.iter().enumerate() {
                wt[co * patch + k] = v;
            }
        }
        // grad_out (pixels x cout) · Wᵀ (cout x patch)
        T::gemm(
            pixels,
            cout,
            patch,
            T::one(),
            go,
            cout as isize,
            1,
            &wt,
            patch as isize,
            1,
            T::zero(),
            &mut gcol,
            patch as isize,
            1,
        );
        let gi = if pointwise {
            gcol
        } else {
            let mut gi = vec![T::zero(); g.in_h * g.in_w * params.in_channels];
            col2im(&gcol, &g, params, &mut gi);
            gi
        };
        Some(Tensor::from_vec(&[g.in_h, g.in_w, params.in_channels], gi)?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: grad_input,
        weights: grad_w,
        bias: grad_bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_pointwise() {
        let input = Tensor::<f32>::from_vec(&[2, 3, 1], vec![1., -2., 3., 4., 5., -6.]).unwrap();
        let mut p = ConvParams::zeros(1, 1, 1, 1);
        p.weights[0] = 1.0;
        let out = conv2d_forward(&input, &p, Padding::Same, 1).unwrap();
        assert_eq!(out, input);
        let (gi, _, _) = conv2d_backward(&input, &p, Padding::Same, 1, &input).unwrap();
        assert_eq!(gi, input);
    }

    #[test]
    fn ones_kernel_counts_neighbours() {
        let input = Tensor::<f32>::filled(&[3, 3, 1], 1.0);
        let mut p = ConvParams::zeros(3, 3, 1, 1);
        p.weights.iter_mut().for_each(|w| *w = 1.0);
        let out = conv2d_forward(&input, &p, Padding::Same, 1).unwrap();
        assert_eq!(out.at(1, 1, 0), 9.0);
        for (y, x) in [(0, 0), (0, 2), (2, 0), (2, 2)] {
            assert_eq!(out.at(y, x, 0), 4.0);
        }
        assert_eq!(out.at(0, 1, 0), 6.0);
    }

    #[test]
    fn same_padding_keeps_extent_for_table_kernels() {
        let input = Tensor::<f32>::filled(&[7, 5, 2], 0.5);
        for (kh, kw) in [(1, 1), (1, 3), (3, 1), (3, 3)] {
            let p = ConvParams::zeros(kh, kw, 2, 3);
            let out = conv2d_forward(&input, &p, Padding::Same, 1).unwrap();
            assert_eq!(out.dims(), &[7, 5, 3]);
        }
    }

    #[test]
    fn table_parameter_count() {
        let p = ConvParams::<f32>::zeros(1, 3, 16, 32);
        assert_eq!(p.param_count(), 1568);
    }

    #[test]
    fn errors() {
        let input = Tensor::<f32>::filled(&[4, 4, 2], 0.0);
        let p = ConvParams::zeros(3, 3, 3, 1);
        assert!(matches!(
            conv2d_forward(&input, &p, Padding::Same, 1),
            Err(Error::Shape(_))
        ));
        let p = ConvParams::zeros(3, 3, 2, 1);
        assert!(matches!(
            conv2d_forward(&input, &p, Padding::Valid, 0),
            Err(Error::Argument(_))
        ));
        let bad = Tensor::<f32>::filled(&[3, 3, 1], 0.0);
        assert!(matches!(
            conv2d_backward(&input, &p, Padding::Same, 1, &bad),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn zero_grad_out_gives_zero_grads() {
        let input = Tensor::<f64>::from_vec(&[3, 3, 1], (0..9).map(|v| v as f64).collect()).unwrap();
        let mut p = ConvParams::zeros(3, 3, 1, 2);
        p.weights.iter_mut().enumerate().for_each(|(i, w)| *w = i as f64 * 0.1);
        let go = Tensor::zeros(&[3, 3, 2]);
        let (gi, gw, gb) = conv2d_backward(&input, &p, Padding::Same, 1, &go).unwrap();
        assert!(gi.data().iter().chain(&gw).chain(&gb).all(|&v| v == 0.0));
    }

    #[test]
    fn valid_strided_shape() {
        let input = Tensor::<f32>::filled(&[7, 7, 1], 1.0);
        let mut p = ConvParams::zeros(3, 3, 1, 1);
        p.weights.iter_mut().for_each(|w| *w = 1.0);
        let out = conv2d_forward(&input, &p, Padding::Valid, 2).unwrap();
        assert_eq!(out.dims(), &[3, 3, 1]);
        assert!(out.data().iter().all(|&v| v == 9.0));
    }
}
