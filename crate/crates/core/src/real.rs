//! Scalar abstraction over the two supported precisions.
//!
//! `f32` is the storage and compute type for normal use. `f64` exists so that
//! finite-difference gradient checks have enough headroom to be meaningful.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::ops::activation::Activation;

use std::sync::atomic::{AtomicBool, Ordering};

const NARROW_MAX_N: usize = 1024;

static NARROW_ENABLED: AtomicBool = AtomicBool::new(true);

#[doc(hidden)]
pub fn set_narrow_kernel(enabled: bool) {
    NARROW_ENABLED.store(enabled, Ordering::Relaxed);
}

pub trait Real:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// `C = alpha * A * B + beta * C` with explicit row/column strides.
    ///
    /// `A` is `m x k`, `B` is `k x n`, `C` is `m x n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        rsa: isize,
        csa: isize,
        b: &[Self],
        rsb: isize,
        csb: isize,
        beta: Self,
        c: &mut [Self],
        rsc: isize,
        csc: isize,
    );

    fn from_f64_lossy(v: f64) -> Self;

    fn as_f64(self) -> f64;

    fn as_f32(self) -> f32;

    fn activate(act: &dyn Activation, pre: &[Self], out: &mut [Self]);

    fn activate_backward(act: &dyn Activation, pre: &[Self], grad_out: &[Self], grad_in: &mut [Self]);
}

impl Real for f32 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: &[f32],
        rsa: isize,
        csa: isize,
        b: &[f32],
        rsb: isize,
        csb: isize,
        beta: f32,
        c: &mut [f32],
        rsc: isize,
        csc: isize,
    ) {
        if m == 0 || n == 0 {
            return;
        }
        debug_assert!(span(m, k, rsa, csa) <= a.len());
        debug_assert!(span(k, n, rsb, csb) <= b.len());
        debug_assert!(span(m, n, rsc, csc) <= c.len());
        let row_major = |rs: isize, cs: isize| cs == 1 && rs == n as isize;
        if alpha == 1.0
            && NARROW_ENABLED.load(Ordering::Relaxed)
            && (16..=NARROW_MAX_N).contains(&n)
            && row_major(rsb, csb)
            && row_major(rsc, csc)
            && rsa >= 0
            && csa == 1
        {
            if beta == 0.0 {
                c[..m * n].fill(0.0);
            } else if beta != 1.0 {
                c[..m * n].iter_mut().for_each(|v| *v *= beta);
            }
            crate::kernel::sgemm_narrow(m, k, n, a, rsa as usize, csa as usize, b, c);
            return;
        }
        // SAFETY: the strides and extents describe regions inside the slices
        // (checked above in debug builds and guaranteed by every caller).
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            );
        }
    }

    fn from_f64_lossy(v: f64) -> f32 {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }

    fn as_f32(self) -> f32 {
        self
    }

    fn activate(act: &dyn Activation, pre: &[f32], out: &mut [f32]) {
        act.forward_f32(pre, out)
    }

    fn activate_backward(act: &dyn Activation, pre: &[f32], grad_out: &[f32], grad_in: &mut [f32]) {
        act.backward_f32(pre, grad_out, grad_in)
    }
}

impl Real for f64 {
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: &[f64],
        rsa: isize,
        csa: isize,
        b: &[f64],
        rsb: isize,
        csb: isize,
        beta: f64,
        c: &mut [f64],
        rsc: isize,
        csc: isize,
    ) {
        if m == 0 || n == 0 {
            return;
        }
        debug_assert!(span(m, k, rsa, csa) <= a.len());
        debug_assert!(span(k, n, rsb, csb) <= b.len());
        debug_assert!(span(m, n, rsc, csc) <= c.len());
        // SAFETY: see the f32 implementation.
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                rsa,
                csa,
                b.as_ptr(),
                rsb,
                csb,
                beta,
                c.as_mut_ptr(),
                rsc,
                csc,
            );
        }
    }

    fn from_f64_lossy(v: f64) -> f64 {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }

    fn as_f32(self) -> f32 {
        self as f32
    }

    fn activate(act: &dyn Activation, pre: &[f64], out: &mut [f64]) {
        act.forward_f64(pre, out)
    }

    fn activate_backward(act: &dyn Activation, pre: &[f64], grad_out: &[f64], grad_in: &mut [f64]) {
        act.backward_f64(pre, grad_out, grad_in)
    }
}

fn span(rows: usize, cols: usize, rs: isize, cs: isize) -> usize {
    if rows == 0 || cols == 0 {
        return 0;
    }
    ((rows - 1) as isize * rs + (cols - 1) as isize * cs) as usize + 1
}
