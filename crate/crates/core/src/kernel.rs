//! Register-tiled f32 matrix product for the narrow right-hand sides that
//! dominate this network (`n` = output channels or patch width, usually
//! 32..600). The general-purpose packed GEMM spends most of its time
//! repacking the tall left operand when `n` is this small.

const ROWS: usize = 6;
const COLS: usize = 16;

/// `C += A * B` where `B` (`k x n`) and `C` (`m x n`) are row-contiguous and
/// `A` is addressed through `(rsa, csa)`.
pub(crate) fn sgemm_narrow(m: usize, k: usize, n: usize, a: &[f32], rsa: usize, csa: usize, b: &[f32], c: &mut [f32]) {
    #[cfg(target_arch = "x86_64")]
    {
        if std::is_x86_feature_detected!("avx2") && std::is_x86_feature_detected!("fma") {
            // SAFETY: the required target features were detected at runtime.
            unsafe { sgemm_narrow_avx2(m, k, n, a, rsa, csa, b, c) };
            return;
        }
    }
    sgemm_narrow_body(m, k, n, a, rsa, csa, b, c);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
#[allow(clippy::too_many_arguments)]
unsafe fn sgemm_narrow_avx2(m: usize, k: usize, n: usize, a: &[f32], rsa: usize, csa: usize, b: &[f32], c: &mut [f32]) {
    use std::arch::x86_64::*;

    let full_cols = n / COLS * COLS;
    let mut i = 0;
    while i + ROWS <= m {
        let mut j = 0;
        while j < full_cols {
            let mut acc = [_mm256_setzero_ps(); 2 * ROWS];
            let a0 = a.as_ptr().add(i * rsa);
            let bp = b.as_ptr().add(j);
            for p in 0..k {
                let b0 = _mm256_loadu_ps(bp.add(p * n));
                let b1 = _mm256_loadu_ps(bp.add(p * n + 8));
                let ap = a0.add(p * csa);
                for r in 0..ROWS {
                    let av = _mm256_set1_ps(*ap.add(r * rsa));
                    acc[2 * r] = _mm256_fmadd_ps(av, b0, acc[2 * r]);
                    acc[2 * r + 1] = _mm256_fmadd_ps(av, b1, acc[2 * r + 1]);
                }
            }
            for r in 0..ROWS {
                let cp = c.as_mut_ptr().add((i + r) * n + j);
                _mm256_storeu_ps(cp, _mm256_add_ps(_mm256_loadu_ps(cp), acc[2 * r]));
                _mm256_storeu_ps(cp.add(8), _mm256_add_ps(_mm256_loadu_ps(cp.add(8)), acc[2 * r + 1]));
            }
            j += COLS;
        }
        if j < n {
            edge(i, ROWS, j, n, k, a, rsa, csa, b, c);
        }
        i += ROWS;
    }
    if i < m {
        sgemm_narrow_body(m - i, k, n, &a[i * rsa..], rsa, csa, b, &mut c[i * n..]);
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn sgemm_narrow_body(m: usize, k: usize, n: usize, a: &[f32], rsa: usize, csa: usize, b: &[f32], c: &mut [f32]) {
    let full_cols = n / COLS * COLS;
    let mut i = 0;
    while i + ROWS <= m {
        let mut j = 0;
        while j < full_cols {
            tile::<ROWS, COLS>(i, j, k, n, a, rsa, csa, b, c);
            j += COLS;
        }
        if j < n {
            edge(i, ROWS, j, n, k, a, rsa, csa, b, c);
        }
        i += ROWS;
    }
    while i < m {
        let mut j = 0;
        while j < full_cols {
            tile::<1, COLS>(i, j, k, n, a, rsa, csa, b, c);
            j += COLS;
        }
        if j < n {
            edge(i, 1, j, n, k, a, rsa, csa, b, c);
        }
        i += 1;
    }
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn tile<const R: usize, const C: usize>(
    i: usize,
    j: usize,
    k: usize,
    n: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    c: &mut [f32],
) {
    let mut acc = [[0f32; C]; R];
    for p in 0..k {
        let brow: &[f32; C] = b[p * n + j..p * n + j + C].try_into().unwrap();
        for r in 0..R {
            let av = a[(i + r) * rsa + p * csa];
            for q in 0..C {
                acc[r][q] = av.mul_add(brow[q], acc[r][q]);
            }
        }
    }
    for r in 0..R {
        let crow = &mut c[(i + r) * n + j..(i + r) * n + j + C];
        for q in 0..C {
            crow[q] += acc[r][q];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn edge(
    i: usize,
    rows: usize,
    j0: usize,
    n: usize,
    k: usize,
    a: &[f32],
    rsa: usize,
    csa: usize,
    b: &[f32],
    c: &mut [f32],
) {
    for r in 0..rows {
        for j in j0..n {
            let mut s = 0f32;
            for p in 0..k {
                s = a[(i + r) * rsa + p * csa].mul_add(b[p * n + j], s);
            }
            c[(i + r) * n + j] += s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_product() {
        for &(m, k, n) in &[(1, 1, 1), (5, 3, 17), (9, 7, 32), (4, 2, 36), (13, 11, 48), (3, 5, 4)] {
            let a: Vec<f32> = (0..m * k).map(|v| ((v * 37 % 11) as f32 - 5.0) * 0.25).collect();
            let b: Vec<f32> = (0..k * n).map(|v| ((v * 17 % 7) as f32 - 3.0) * 0.5).collect();
            for transposed in [false, true] {
                let (rsa, csa) = if transposed { (1, m) } else { (k, 1) };
                let at = |r: usize, p: usize| a[r * rsa + p * csa];
                let mut c = vec![1f32; m * n];
                sgemm_narrow(m, k, n, &a, rsa, csa, &b, &mut c);
                for r in 0..m {
                    for q in 0..n {
                        let want: f32 = 1.0 + (0..k).map(|p| at(r, p) * b[p * n + q]).sum::<f32>();
                        assert!((c[r * n + q] - want).abs() < 1e-4, "{m}x{k}x{n} at ({r},{q})");
                    }
                }
            }
        }
    }
}
