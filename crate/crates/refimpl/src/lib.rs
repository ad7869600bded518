//! Slow, dependency-free f64 reference implementations.
//!
//! Everything here is written as plain nested loops, deliberately sharing no
//! code with the fast f32 engine, so the two can be checked against each
//! other. Used only from test suites.

use std::collections::BTreeMap;

pub mod pipeline;

// ---------------------------------------------------------------------------
// Elementwise and linear algebra primitives
// ---------------------------------------------------------------------------

pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a[i * k + p] * b[p * n + j];
            }
            c[i * n + j] = acc;
        }
    }
    c
}

pub fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Direct cross-correlation, no unfolding.
#[allow(clippy::too_many_arguments)]
pub fn conv2d(
    x: &[f64],
    w: &[f64],
    c_in: usize,
    h: usize,
    wid: usize,
    c_out: usize,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = (h + 2 * pad - k) / stride + 1;
    let ow = (wid + 2 * pad - k) / stride + 1;
    let mut out = vec![0.0; c_out * oh * ow];
    for oc in 0..c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ic in 0..c_in {
                    for ky in 0..k {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if ix < 0 || ix >= wid as isize {
                                continue;
                            }
                            acc += x[(ic * h + iy as usize) * wid + ix as usize]
                                * w[((oc * c_in + ic) * k + ky) * k + kx];
                        }
                    }
                }
                out[(oc * oh + oy) * ow + ox] = acc;
            }
        }
    }
    out
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect()
}

pub fn gelu(x: &[f64]) -> Vec<f64> {
    let s = (2.0 / std::f64::consts::PI).sqrt();
    x.iter()
        .map(|&v| 0.5 * v * (1.0 + (s * (v + 0.044715 * v * v * v)).tanh()))
        .collect()
}

pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|&v| (v - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

pub fn softmax_rows(x: &[f64], rows: usize, d: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows * d);
    for r in 0..rows {
        out.extend(softmax_row(&x[r * d..(r + 1) * d]));
    }
    out
}

/// Mean over rows of -log softmax(row)[label].
pub fn cross_entropy(logits: &[f64], labels: &[usize], b: usize, c: usize) -> f64 {
    let mut total = 0.0;
    for r in 0..b {
        let row = &logits[r * c..(r + 1) * c];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[labels[r]];
    }
    total / b as f64
}

pub fn row_mean(x: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; d];
    for r in 0..n {
        for j in 0..d {
            out[j] += x[r * d + j];
        }
    }
    for o in out.iter_mut() {
        *o /= n as f64;
    }
    out
}

pub fn spatial_mean(x: &[f64], c: usize, hw: usize) -> Vec<f64> {
    (0..c)
        .map(|ch| x[ch * hw..(ch + 1) * hw].iter().sum::<f64>() / hw as f64)
        .collect()
}

pub fn gather_rows(x: &[f64], d: usize, indices: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(indices.len() * d);
    for &i in indices {
        out.extend_from_slice(&x[i * d..(i + 1) * d]);
    }
    out
}

/// rows[N,Cin] @ w[Cin,Cout] + bias[Cout].
pub fn linear(rows: &[f64], w: &[f64], bias: &[f64], n: usize, c_in: usize, c_out: usize) -> Vec<f64> {
    let mut out = matmul(rows, w, n, c_in, c_out);
    for r in 0..n {
        for j in 0..c_out {
            out[r * c_out + j] += bias[j];
        }
    }
    out
}

/// Degree-normalized complete-graph adjacency with self loops:
/// D^{-1/2} (A + I) D^{-1/2} with A all-ones, rows renormalized to sum 1.
pub fn complete_graph_adjacency(n: usize) -> Vec<f64> {
    let mut a = vec![1.0; n * n];
    for i in 0..n {
        a[i * n + i] += 1.0;
    }
    let degrees: Vec<f64> = (0..n)
        .map(|i| a[i * n..(i + 1) * n].iter().sum::<f64>())
        .collect();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] /= (degrees[i] * degrees[j]).sqrt();
        }
    }
    for i in 0..n {
        let row_sum: f64 = a[i * n..(i + 1) * n].iter().sum();
        for j in 0..n {
            a[i * n + j] /= row_sum;
        }
    }
    a
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = probe[i];
        probe[i] = orig + h;
        let plus = f(&probe);
        probe[i] = orig - h;
        let minus = f(&probe);
        probe[i] = orig;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

/// Single-coordinate central difference.
pub fn central_diff_at(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize, h: f64) -> f64 {
    let mut probe = x.to_vec();
    probe[i] = x[i] + h;
    let plus = f(&probe);
    probe[i] = x[i] - h;
    let minus = f(&probe);
    (plus - minus) / (2.0 * h)
}

/// Relative error guarded against tiny denominators.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Named parameter store for the reference pipeline.
pub type ParamMap = BTreeMap<String, Vec<f64>>;
