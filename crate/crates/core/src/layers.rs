//! Parameter-bearing building blocks shared by the model components.

use crate::error::Result;
use crate::numerics::Tensor;
use crate::rng::derive_rng;
use rand::Rng;

/// Glorot-uniform samples in +-sqrt(6 / (fan_in + fan_out)).
pub(crate) fn glorot_uniform(seed: u64, name: &str, n: usize, fan_in: usize, fan_out: usize) -> Vec<f32> {
    let bound = (6.0 / (fan_in + fan_out) as f32).sqrt();
    let mut rng = derive_rng(seed, name);
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// He-uniform samples in +-sqrt(6 / fan_in), sized for relu stacks where
/// Glorot attenuates the signal block after block.
pub(crate) fn he_uniform(seed: u64, name: &str, n: usize, fan_in: usize) -> Vec<f32> {
    let bound = (6.0 / fan_in as f32).sqrt();
    let mut rng = derive_rng(seed, name);
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

/// Dense layer `rows[N,in] @ weight[in,out] + bias[out]`.
pub struct Linear {
    name: String,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Linear {
    pub fn init(name: &str, in_width: usize, out_width: usize, seed: u64) -> Self {
        let wname = format!("{name}.weight");
        let weight = Tensor::from_vec(
            &[in_width, out_width],
            glorot_uniform(seed, &wname, in_width * out_width, in_width, out_width),
        )
        .expect("sized construction")
        .with_grad();
        let bias = Tensor::zeros(&[out_width]).with_grad();
        Linear {
            name: name.to_string(),
            weight,
            bias,
        }
    }

    /// Wraps existing tensors, e.g. identity weights in tests.
    pub fn from_parts(name: &str, weight: Tensor, bias: Tensor) -> Self {
        Linear {
            name: name.to_string(),
            weight,
            bias,
        }
    }

    pub fn in_width(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn out_width(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn forward(&self, rows: &Tensor) -> Result<Tensor> {
        rows.matmul(&self.weight)?.add_row_bias(&self.bias)
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        vec![
            (format!("{}.weight", self.name), self.weight.clone()),
            (format!("{}.bias", self.name), self.bias.clone()),
        ]
    }
}

/// 3x3 convolution with per-channel bias.
pub(crate) struct ConvLayer {
    name: String,
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

impl ConvLayer {
    pub fn init(name: &str, in_ch: usize, out_ch: usize, stride: usize, seed: u64) -> Self {
        let k = 3;
        let wname = format!("{name}.weight");
        let weight = Tensor::from_vec(
            &[out_ch, in_ch, k, k],
            he_uniform(seed, &wname, out_ch * in_ch * k * k, in_ch * k * k),
        )
        .expect("sized construction")
        .with_grad();
        let bias = Tensor::zeros(&[out_ch]).with_grad();
        ConvLayer {
            name: name.to_string(),
            weight,
            bias,
            stride,
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.conv2d(&self.weight, self.stride, 1)?
            .add_channel_bias(&self.bias)
    }

    pub fn params(&self) -> Vec<(String, Tensor)> {
        vec![
            (format!("{}.weight", self.name), self.weight.clone()),
            (format!("{}.bias", self.name), self.bias.clone()),
        ]
    }
}
