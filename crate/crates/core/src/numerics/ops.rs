//! Differentiable tensor operations.
//!
//! Each op validates shapes, computes the forward value through the kernels,
//! and records a backward closure returning one gradient buffer per parent.

use super::kernels::{
    col2im, conv_out_extent, im2col, matmul_kernel, matmul_nt_kernel, matmul_tn_kernel,
    transpose_kernel,
};
use super::Tensor;
use crate::error::{Error, Result};

const GELU_SCALE: f32 = 0.797_884_6; // sqrt(2/pi)
const GELU_CUBIC: f32 = 0.044_715;

impl Tensor {
    /// Standard matrix product `[M,K] x [K,N] -> [M,N]`.
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", &sa, &sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let a = self.to_vec();
        let b = other.to_vec();
        let out = matmul_kernel(&a, &b, m, k, n);
        Ok(Tensor::from_op(
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let da = matmul_nt_kernel(g, &b, m, n, k); // dC @ B^T
                let db = matmul_tn_kernel(&a, g, k, m, n); // A^T @ dC
                vec![da, db]
            }),
        ))
    }

    /// 2-D cross-correlation of `x[C,H,W]` with `w[C',C,k,k]`.
    ///
    /// Output extent per axis is `floor((in + 2*pad - k)/stride) + 1`.
    pub fn conv2d(&self, weight: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
        let sx = self.shape();
        let sw = weight.shape();
        if sx.len() != 3 || sw.len() != 4 || sw[1] != sx[0] || sw[2] != sw[3] {
            return Err(Error::dim("conv2d", &sx, &sw));
        }
        if stride == 0 {
            return Err(Error::Contract("conv2d: stride must be >= 1".into()));
        }
        let (c, h, w) = (sx[0], sx[1], sx[2]);
        let (oc, k) = (sw[0], sw[2]);
        if k > h + 2 * pad || k > w + 2 * pad {
            return Err(Error::dim("conv2d: kernel exceeds padded input", &sx, &sw));
        }
        let oh = conv_out_extent(h, k, stride, pad);
        let ow = conv_out_extent(w, k, stride, pad);

        let x = self.to_vec();
        let wv = weight.to_vec();
        let cols = im2col(&x, c, h, w, k, stride, pad);
        let patch = c * k * k;
        let out = matmul_kernel(&wv, &cols, oc, patch, oh * ow);

        Ok(Tensor::from_op(
            vec![oc, oh, ow],
            out,
            vec![self.clone(), weight.clone()],
            Box::new(move |g| {
                let dw = matmul_nt_kernel(g, &cols, oc, oh * ow, patch);
                let dcols = matmul_tn_kernel(&wv, g, patch, oc, oh * ow);
                let dx = col2im(&dcols, c, h, w, k, stride, pad);
                vec![dx, dw]
            }),
        ))
    }

    pub fn relu(&self) -> Tensor {
        let x = self.to_vec();
        let out: Vec<f32> = x.iter().map(|&v| v.max(0.0)).collect();
        Tensor::from_op(
            self.shape(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(&x)
                    .map(|(&gi, &xi)| if xi > 0.0 { gi } else { 0.0 })
                    .collect()]
            }),
        )
    }

    /// Gaussian error linear unit, tanh approximation.
    pub fn gelu(&self) -> Tensor {
        let x = self.to_vec();
        let out: Vec<f32> = x.iter().map(|&v| gelu_forward(v)).collect();
        Tensor::from_op(
            self.shape(),
            out,
            vec![self.clone()],
            Box::new(move |g| {
                vec![g
                    .iter()
                    .zip(&x)
                    .map(|(&gi, &xi)| gi * gelu_derivative(xi))
                    .collect()]
            }),
        )
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb {
            return Err(Error::dim("add", &sa, &sb));
        }
        let out: Vec<f32> = self
            .to_vec()
            .iter()
            .zip(other.to_vec().iter())
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor::from_op(
            sa,
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| vec![g.to_vec(), g.to_vec()]),
        ))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        let (sa, sb) = (self.shape(), other.shape());
        if sa != sb {
            return Err(Error::dim("mul", &sa, &sb));
        }
        let a = self.to_vec();
        let b = other.to_vec();
        let out: Vec<f32> = a.iter().zip(&b).map(|(x, y)| x * y).collect();
        Ok(Tensor::from_op(
            sa,
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g| {
                let da: Vec<f32> = g.iter().zip(&b).map(|(gi, bi)| gi * bi).collect();
                let db: Vec<f32> = g.iter().zip(&a).map(|(gi, ai)| gi * ai).collect();
                vec![da, db]
            }),
        ))
    }

    pub fn scale(&self, factor: f32) -> Tensor {
        let out: Vec<f32> = self.to_vec().iter().map(|v| v * factor).collect();
        Tensor::from_op(
            self.shape(),
            out,
            vec![self.clone()],
            Box::new(move |g| vec![g.iter().map(|gi| gi * factor).collect()]),
        )
    }

    /// `x[N,D] + bias[D]`, broadcast over rows.
    pub fn add_row_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let (sx, sb) = (self.shape(), bias.shape());
        if sx.len() != 2 || sb.len() != 1 || sb[0] != sx[1] {
            return Err(Error::dim("add_row_bias", &sx, &sb));
        }
        let (n, d) = (sx[0], sx[1]);
        let b = bias.to_vec();
        let mut out = self.to_vec();
        for row in out.chunks_mut(d) {
            for (o, bv) in row.iter_mut().zip(&b) {
                *o += *bv;
            }
        }
        Ok(Tensor::from_op(
            sx,
            out,
            vec![self.clone(), bias.clone()],
            Box::new(move |g| {
                let mut db = vec![0.0f32; d];
                for row in g.chunks(d) {
                    for (acc, gv) in db.iter_mut().zip(row) {
                        *acc += *gv;
                    }
                }
                let _ = n;
                vec![g.to_vec(), db]
            }),
        ))
    }

    /// `x[C,H,W] + bias[C]`, broadcast over the spatial extent.
    pub fn add_channel_bias(&self, bias: &Tensor) -> Result<Tensor> {
        let (sx, sb) = (self.shape(), bias.shape());
        if sx.len() != 3 || sb.len() != 1 || sb[0] != sx[0] {
            return Err(Error::dim("add_channel_bias", &sx, &sb));
        }
        let (c, hw) = (sx[0], sx[1] * sx[2]);
        let b = bias.to_vec();
        let mut out = self.to_vec();
        for (ch, plane) in out.chunks_mut(hw).enumerate() {
            for o in plane.iter_mut() {
                *o += b[ch];
            }
        }
        Ok(Tensor::from_op(
            sx,
            out,
            vec![self.clone(), bias.clone()],
            Box::new(move |g| {
                let db: Vec<f32> = g.chunks(hw).take(c).map(|p| p.iter().sum()).collect();
                vec![g.to_vec(), db]
            }),
        ))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let old = self.shape();
        let expected: usize = shape.iter().product();
        if expected != self.len() {
            return Err(Error::dim("reshape", &old, shape));
        }
        Ok(Tensor::from_op(
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(move |g| vec![g.to_vec()]),
        ))
    }

    pub fn transpose2d(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::dim("transpose2d", &s, &s));
        }
        let (r, c) = (s[0], s[1]);
        let out = transpose_kernel(&self.to_vec(), r, c);
        Ok(Tensor::from_op(
            vec![c, r],
            out,
            vec![self.clone()],
            Box::new(move |g| vec![transpose_kernel(g, c, r)]),
        ))
    }

    /// Stacks 2-D tensors with equal widths along the row axis.
    pub fn concat_rows(parts: &[&Tensor]) -> Result<Tensor> {
        if parts.is_empty() {
            return Err(Error::Contract("concat_rows: no inputs".into()));
        }
        let width = parts[0].shape()[1];
        let mut rows = 0;
        for p in parts {
            let s = p.shape();
            if s.len() != 2 || s[1] != width {
                return Err(Error::dim("concat_rows", &parts[0].shape(), &s));
            }
            rows += s[0];
        }
        let mut data = Vec::with_capacity(rows * width);
        let mut row_counts = Vec::with_capacity(parts.len());
        for p in parts {
            data.extend_from_slice(&p.to_vec());
            row_counts.push(p.shape()[0]);
        }
        Ok(Tensor::from_op(
            vec![rows, width],
            data,
            parts.iter().map(|p| (*p).clone()).collect(),
            Box::new(move |g| {
                let mut grads = Vec::with_capacity(row_counts.len());
                let mut offset = 0;
                for &r in &row_counts {
                    grads.push(g[offset * width..(offset + r) * width].to_vec());
                    offset += r;
                }
                grads
            }),
        ))
    }

    /// Gathers rows of `x[N,D]` by index; gradient scatter-adds back.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 {
            return Err(Error::dim("gather_rows", &s, &s));
        }
        let (n, d) = (s[0], s[1]);
        for &i in indices {
            if i >= n {
                return Err(Error::index("gather_rows", i, n));
            }
        }
        let x = self.to_vec();
        let mut out = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            out.extend_from_slice(&x[i * d..(i + 1) * d]);
        }
        let idx = indices.to_vec();
        Ok(Tensor::from_op(
            vec![indices.len(), d],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![0.0f32; n * d];
                for (r, &i) in idx.iter().enumerate() {
                    for (dst, src) in dx[i * d..(i + 1) * d].iter_mut().zip(&g[r * d..(r + 1) * d])
                    {
                        *dst += *src;
                    }
                }
                vec![dx]
            }),
        ))
    }

    /// Column-wise mean of `x[N,D] -> [1,D]`.
    pub fn row_mean(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 2 || s[0] == 0 {
            return Err(Error::dim("row_mean", &s, &s));
        }
        let (n, d) = (s[0], s[1]);
        let x = self.to_vec();
        let mut out = vec![0.0f32; d];
        for row in x.chunks(d) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += *v;
            }
        }
        let inv = 1.0 / n as f32;
        for o in out.iter_mut() {
            *o *= inv;
        }
        Ok(Tensor::from_op(
            vec![1, d],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![0.0f32; n * d];
                for row in dx.chunks_mut(d) {
                    for (o, gv) in row.iter_mut().zip(g) {
                        *o = gv * inv;
                    }
                }
                vec![dx]
            }),
        ))
    }

    /// Mean over the spatial extent of `x[C,H,W] -> [1,C]` (global average pool).
    pub fn spatial_mean(&self) -> Result<Tensor> {
        let s = self.shape();
        if s.len() != 3 {
            return Err(Error::dim("spatial_mean", &s, &s));
        }
        let (c, hw) = (s[0], s[1] * s[2]);
        let x = self.to_vec();
        let inv = 1.0 / hw as f32;
        let out: Vec<f32> = x.chunks(hw).map(|p| p.iter().sum::<f32>() * inv).collect();
        Ok(Tensor::from_op(
            vec![1, c],
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![0.0f32; c * hw];
                for (ch, plane) in dx.chunks_mut(hw).enumerate() {
                    let gv = g[ch] * inv;
                    for o in plane.iter_mut() {
                        *o = gv;
                    }
                }
                vec![dx]
            }),
        ))
    }

    pub fn sum_all(&self) -> Tensor {
        let total: f32 = self.to_vec().iter().sum();
        let n = self.len();
        Tensor::from_op(
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(move |g| vec![vec![g[0]; n]]),
        )
    }

    pub fn mean_all(&self) -> Tensor {
        let n = self.len();
        let inv = 1.0 / n as f32;
        let total: f32 = self.to_vec().iter().sum::<f32>() * inv;
        Tensor::from_op(
            vec![1],
            vec![total],
            vec![self.clone()],
            Box::new(move |g| vec![vec![g[0] * inv; n]]),
        )
    }

    /// Softmax along the last axis of a 1-D or 2-D tensor, computed with
    /// max-subtraction so arbitrarily large finite logits stay stable.
    pub fn softmax(&self) -> Result<Tensor> {
        let s = self.shape();
        let (rows, d) = match s.len() {
            1 => (1, s[0]),
            2 => (s[0], s[1]),
            _ => return Err(Error::dim("softmax", &s, &s)),
        };
        if d == 0 {
            return Err(Error::Contract("softmax: empty axis".into()));
        }
        let x = self.to_vec();
        let mut out = vec![0.0f32; rows * d];
        for r in 0..rows {
            softmax_row(&x[r * d..(r + 1) * d], &mut out[r * d..(r + 1) * d]);
        }
        let y = out.clone();
        Ok(Tensor::from_op(
            s,
            out,
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![0.0f32; rows * d];
                for r in 0..rows {
                    let yr = &y[r * d..(r + 1) * d];
                    let gr = &g[r * d..(r + 1) * d];
                    let dot: f32 = yr.iter().zip(gr).map(|(yv, gv)| yv * gv).sum();
                    for ((o, &yv), &gv) in dx[r * d..(r + 1) * d].iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - dot);
                    }
                }
                vec![dx]
            }),
        ))
    }

    /// Mean negative log-likelihood of `labels` under row-wise softmax of
    /// `logits[B,C]`.
    pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<Tensor> {
        let s = logits.shape();
        if s.len() != 2 {
            return Err(Error::dim("cross_entropy", &s, &s));
        }
        let (b, c) = (s[0], s[1]);
        if labels.len() != b {
            return Err(Error::Contract(format!(
                "cross_entropy: {} logit rows but {} labels",
                b,
                labels.len()
            )));
        }
        for &l in labels {
            if l >= c {
                return Err(Error::index("cross_entropy", l, c));
            }
        }
        let x = logits.to_vec();
        let mut loss = 0.0f32;
        let mut probs = vec![0.0f32; b * c];
        for r in 0..b {
            let row = &x[r * c..(r + 1) * c];
            let m = row.iter().fold(f32::NEG_INFINITY, |a, &v| a.max(v));
            let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<f32>().ln();
            loss += lse - row[labels[r]];
            for (p, &v) in probs[r * c..(r + 1) * c].iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        loss /= b as f32;
        let labels = labels.to_vec();
        Ok(Tensor::from_op(
            vec![1],
            vec![loss],
            vec![logits.clone()],
            Box::new(move |g| {
                let scale = g[0] / b as f32;
                let mut dx = probs.clone();
                for (r, &l) in labels.iter().enumerate() {
                    dx[r * c + l] -= 1.0;
                }
                for v in dx.iter_mut() {
                    *v *= scale;
                }
                vec![dx]
            }),
        ))
    }

    /// Picks one element by flat index as a scalar tensor.
    pub fn select_element(&self, flat_index: usize) -> Result<Tensor> {
        let n = self.len();
        if flat_index >= n {
            return Err(Error::index("select_element", flat_index, n));
        }
        let v = self.value_at(flat_index);
        Ok(Tensor::from_op(
            vec![1],
            vec![v],
            vec![self.clone()],
            Box::new(move |g| {
                let mut dx = vec![0.0f32; n];
                dx[flat_index] = g[0];
                vec![dx]
            }),
        ))
    }
}

fn softmax_row(row: &[f32], out: &mut [f32]) {
    let m = row.iter().fold(f32::NEG_INFINITY, |a, &v| a.max(v));
    let mut sum = 0.0f32;
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - m).exp();
        sum += *o;
    }
    let inv = 1.0 / sum;
    for o in out.iter_mut() {
        *o *= inv;
    }
}

fn gelu_forward(x: f32) -> f32 {
    let u = GELU_SCALE * (x + GELU_CUBIC * x * x * x);
    0.5 * x * (1.0 + u.tanh())
}

fn gelu_derivative(x: f32) -> f32 {
    let u = GELU_SCALE * (x + GELU_CUBIC * x * x * x);
    let t = u.tanh();
    let sech2 = 1.0 - t * t;
    0.5 * (1.0 + t) + 0.5 * x * sech2 * GELU_SCALE * (1.0 + 3.0 * GELU_CUBIC * x * x)
}
