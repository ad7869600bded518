//! Shared helpers for the integration suites.

#![allow(dead_code)]

use fgwk::rng::derive_rng_indexed;
use fgwk::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng_for(seed: u64, label: &str) -> ChaCha8Rng {
    derive_rng_indexed(0xf70c, label, seed)
}

/// Uniform values in [-hi, -lo] u [lo, hi]; keeps inputs away from kinks.
pub fn random_away_from_zero(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n)
        .map(|_| {
            let mag = rng.random_range(lo..hi);
            if rng.random_bool(0.5) {
                mag
            } else {
                -mag
            }
        })
        .collect()
}

pub fn random_uniform(rng: &mut ChaCha8Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn tensor_from(shape: &[usize], data: Vec<f32>) -> Tensor {
    Tensor::from_vec(shape, data).unwrap()
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Asserts `analytic` matches `expected` coordinate-wise under a guarded
/// relative error. `floor` shields coordinates whose true magnitude is far
/// below the op's value scale from f32 rounding noise.
pub fn assert_grads_close(analytic: &[f32], expected: &[f64], tol: f64, floor: f64, ctx: &str) {
    assert_eq!(analytic.len(), expected.len(), "{ctx}: length mismatch");
    for (i, (&a, &e)) in analytic.iter().zip(expected).enumerate() {
        let err = fgwk_refimpl::rel_err(a as f64, e, floor);
        assert!(
            err < tol,
            "{ctx}: grad[{i}] analytic={a} expected={e} rel_err={err}"
        );
    }
}

/// Standard gradient check: loss = sum(readout .* op(x)) on the engine side
/// against central finite differences of the f64 reference.
pub struct GradCheck {
    pub tol: f64,
    pub floor: f64,
    pub step: f64,
}

impl Default for GradCheck {
    fn default() -> Self {
        GradCheck {
            tol: 1e-3,
            floor: 1e-2,
            step: 1e-3,
        }
    }
}

impl GradCheck {
    /// Checks d(loss)/d(input) for a single differentiable input. Other
    /// inputs of the op, if any, are baked into the closures.
    pub fn check_one(
        &self,
        input: &[f32],
        shape: &[usize],
        engine_loss: impl Fn(&Tensor) -> Tensor,
        reference_loss: impl Fn(&[f64]) -> f64,
        ctx: &str,
    ) {
        let x = tensor_from(shape, input.to_vec()).with_grad();
        let loss = engine_loss(&x);
        assert_eq!(loss.len(), 1, "{ctx}: loss must be scalar");
        loss.backward().unwrap();
        let analytic = x.grad().unwrap_or_else(|| panic!("{ctx}: no gradient"));

        let base = to_f64(input);
        let fd = fgwk_refimpl::central_diff(&|p: &[f64]| reference_loss(p), &base, self.step);
        assert_grads_close(&analytic, &fd, self.tol, self.floor, ctx);
    }
}

/// Weighted readout turning a tensor-valued op into a scalar loss, so the
/// whole Jacobian is exercised. Engine and reference use the same weights.
pub fn readout_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
    random_away_from_zero(rng, n, 0.5, 1.5)
}

pub fn engine_readout(out: &Tensor, weights: &[f32]) -> Tensor {
    let w = tensor_from(&out.shape(), weights.to_vec());
    out.mul(&w).unwrap().sum_all()
}

pub fn reference_readout(out: &[f64], weights: &[f32]) -> f64 {
    out.iter().zip(weights).map(|(&o, &w)| o * w as f64).sum()
}
