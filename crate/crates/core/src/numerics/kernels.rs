//! Raw f32 kernels behind the differentiable ops. All loops run in a fixed
//! order, so outputs are bit-identical across runs.

/// C[m,n] = A[m,k] @ B[k,n], row-major.
pub(crate) fn matmul_kernel(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut c = vec![0.0f32; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &av) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
    c
}

/// C[m,n] = A[m,k] @ B[n,k]^T, i.e. dot products of rows.
pub(crate) fn matmul_nt_kernel(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut c = vec![0.0f32; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0f32;
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            c[i * n + j] = acc;
        }
    }
    c
}

/// C[m,n] = A[k,m]^T @ B[k,n].
pub(crate) fn matmul_tn_kernel(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
    let mut c = vec![0.0f32; m * n];
    for p in 0..k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for (i, &av) in a_row.iter().enumerate() {
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    }
    c
}

pub(crate) fn transpose_kernel(a: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0.0f32; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Output spatial extent of a convolution axis.
pub(crate) fn conv_out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - kernel) / stride + 1
}

/// Unfolds `x[c,h,w]` into a `(c*k*k) x (oh*ow)` patch matrix. Out-of-frame
/// taps read as zero.
pub(crate) fn im2col(
    x: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let oh = conv_out_extent(h, k, stride, pad);
    let ow = conv_out_extent(w, k, stride, pad);
    let patch = c * k * k;
    let mut cols = vec![0.0f32; patch * oh * ow];
    for ic in 0..c {
        for kh in 0..k {
            for kw in 0..k {
                let row = (ic * k + kh) * k + kw;
                let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * stride + kh) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let src_row = (ic * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kw) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dst[oy * ow + ox] = x[src_row + ix as usize];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: folds patch-matrix gradients back onto the input.
#[allow(clippy::too_many_arguments)]
pub(crate) fn col2im(
    dcols: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let oh = conv_out_extent(h, k, stride, pad);
    let ow = conv_out_extent(w, k, stride, pad);
    let mut dx = vec![0.0f32; c * h * w];
    for ic in 0..c {
        for kh in 0..k {
            for kw in 0..k {
                let row = (ic * k + kh) * k + kw;
                let src = &dcols[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = (oy * stride + kh) as isize - pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = (ic * h + iy as usize) * w;
                    for ox in 0..ow {
                        let ix = (ox * stride + kw) as isize - pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dx[dst_row + ix as usize] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
    dx
}
