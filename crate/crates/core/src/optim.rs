//! Optimizers: the sign-momentum LION rule and a plain SGD baseline.
//!
//! LION keeps a single momentum buffer per parameter. Each step interpolates
//! momentum and gradient, applies only the *sign* of the result (so every
//! coordinate moves by exactly the update rate), adds decoupled weight
//! decay, then refreshes the momentum:
//!
//! ```text
//! c      = beta1 * m + (1 - beta1) * g
//! w     -= lr * (sign(c) + weight_decay * w)      with sign(0) = 0
//! m      = beta2 * m + (1 - beta2) * g
//! ```

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// LION hyperparameters and per-parameter momentum.
#[derive(Debug, Clone, PartialEq)]
pub struct LionState {
    /// Update rate, the uniform per-coordinate step magnitude.
    /// (Full-scale reference value: 5e-6; desk-scale default 1e-4.)
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub weight_decay: f32,
}

impl Default for LionState {
    fn default() -> Self {
        LionState {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 0.0,
        }
    }
}

impl LionState {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config("optimizer.lr: must be positive".into()));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!(
                    "optimizer.{name}: {v} outside [0, 1)"
                )));
            }
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("optimizer.weight_decay: negative".into()));
        }
        Ok(())
    }
}

/// SGD hyperparameters. (Full-scale reference lr: 5e-4.)
#[derive(Debug, Clone, PartialEq)]
pub struct SgdState {
    pub lr: f32,
    /// Classical heavy-ball coefficient; `None` is plain gradient descent.
    pub momentum: Option<f32>,
}

impl Default for SgdState {
    fn default() -> Self {
        SgdState {
            lr: 5e-4,
            momentum: None,
        }
    }
}

fn sign(v: f32) -> f32 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One LION update on a raw parameter slice.
pub fn lion_step(
    param: &mut [f32],
    grad: &[f32],
    momentum: &mut [f32],
    state: &LionState,
) -> Result<()> {
    if param.len() != grad.len() || param.len() != momentum.len() {
        return Err(Error::Contract(format!(
            "lion_step: mismatched lengths {} / {} / {}",
            param.len(),
            grad.len(),
            momentum.len()
        )));
    }
    for i in 0..param.len() {
        let c = state.beta1 * momentum[i] + (1.0 - state.beta1) * grad[i];
        param[i] -= state.lr * (sign(c) + state.weight_decay * param[i]);
        momentum[i] = state.beta2 * momentum[i] + (1.0 - state.beta2) * grad[i];
    }
    Ok(())
}

/// One SGD update on a raw parameter slice.
pub fn sgd_step(
    param: &mut [f32],
    grad: &[f32],
    velocity: Option<&mut Vec<f32>>,
    state: &SgdState,
) -> Result<()> {
    if param.len() != grad.len() {
        return Err(Error::Contract(format!(
            "sgd_step: mismatched lengths {} / {}",
            param.len(),
            grad.len()
        )));
    }
    match (state.momentum, velocity) {
        (Some(m), Some(vel)) => {
            for i in 0..param.len() {
                vel[i] = m * vel[i] + grad[i];
                param[i] -= state.lr * vel[i];
            }
        }
        _ => {
            for (p, &g) in param.iter_mut().zip(grad) {
                *p -= state.lr * g;
            }
        }
    }
    Ok(())
}

/// Clears the gradients of all listed parameters.
pub fn zero_grads(params: &[(String, Tensor)]) {
    for (_, p) in params {
        p.zero_grad();
    }
}

/// Optimizer over a named parameter list; buffers align with list order.
pub enum Optimizer {
    Sgd {
        state: SgdState,
        velocity: Option<Vec<Vec<f32>>>,
    },
    Lion {
        state: LionState,
        momentum: Vec<Vec<f32>>,
    },
}

impl Optimizer {
    pub fn sgd(state: SgdState, params: &[(String, Tensor)]) -> Self {
        let velocity = state
            .momentum
            .map(|_| params.iter().map(|(_, p)| vec![0.0; p.len()]).collect());
        Optimizer::Sgd { state, velocity }
    }

    pub fn lion(state: LionState, params: &[(String, Tensor)]) -> Result<Self> {
        state.validate()?;
        Ok(Optimizer::Lion {
            state,
            momentum: params.iter().map(|(_, p)| vec![0.0; p.len()]).collect(),
        })
    }

    /// Applies one step to every parameter that holds a gradient.
    pub fn step(&mut self, params: &[(String, Tensor)]) -> Result<()> {
        match self {
            Optimizer::Sgd { state, velocity } => {
                for (i, (_, p)) in params.iter().enumerate() {
                    let mut result = Ok(());
                    p.apply_update(|data, grad| {
                        if let Some(g) = grad {
                            result = sgd_step(
                                data,
                                g,
                                velocity.as_mut().map(|v| &mut v[i]),
                                state,
                            );
                        }
                    });
                    result?;
                }
            }
            Optimizer::Lion { state, momentum } => {
                if momentum.len() != params.len() {
                    return Err(Error::Contract(format!(
                        "optimizer: {} momentum buffers for {} parameters",
                        momentum.len(),
                        params.len()
                    )));
                }
                for (i, (_, p)) in params.iter().enumerate() {
                    let mut result = Ok(());
                    p.apply_update(|data, grad| {
                        if let Some(g) = grad {
                            result = lion_step(data, g, &mut momentum[i], state);
                        }
                    });
                    result?;
                }
            }
        }
        Ok(())
    }

    /// Auxiliary buffers held per parameter (LION: one; Adam-class would
    /// need two).
    pub fn buffers_per_param(&self) -> usize {
        match self {
            Optimizer::Sgd { velocity, .. } => usize::from(velocity.is_some()),
            Optimizer::Lion { .. } => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lion_hand_example() {
        // mu=0, g=[2,-3], beta1=0.9, gamma=0, delta=0.01:
        // c = [0.2, -0.3], w' = [-0.01, 0.01], mu' = [0.02, -0.03].
        let state = LionState {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 0.0,
        };
        let mut w = [0.0f32, 0.0];
        let mut mu = [0.0f32, 0.0];
        lion_step(&mut w, &[2.0, -3.0], &mut mu, &state).unwrap();
        assert!((w[0] - -0.01).abs() < 1e-7);
        assert!((w[1] - 0.01).abs() < 1e-7);
        assert!((mu[0] - 0.02).abs() < 1e-7);
        assert!((mu[1] - -0.03).abs() < 1e-7);
    }

    #[test]
    fn lion_zero_gradient_is_pure_decay() {
        let state = LionState {
            lr: 0.1,
            weight_decay: 0.5,
            ..Default::default()
        };
        let mut w = [2.0f32, -4.0];
        let mut mu = [0.0f32, 0.0];
        lion_step(&mut w, &[0.0, 0.0], &mut mu, &state).unwrap();
        // sign(0) = 0, so w' = w * (1 - lr * decay).
        assert!((w[0] - 2.0 * 0.95).abs() < 1e-7);
        assert!((w[1] - -4.0 * 0.95).abs() < 1e-7);
    }

    #[test]
    fn lion_updates_have_uniform_magnitude() {
        let state = LionState {
            lr: 0.03,
            ..Default::default()
        };
        let mut w = [1.0f32, -2.0, 0.5, 10.0];
        let before = w;
        let mut mu = [0.0f32; 4];
        lion_step(&mut w, &[100.0, -0.001, 3.0, -7.0], &mut mu, &state).unwrap();
        for (a, b) in w.iter().zip(&before) {
            // The applied update is exactly lr; the stored difference can be
            // off by an ulp of the parameter after f32 rounding.
            let tol = 1e-6 * b.abs().max(1.0);
            assert!(((a - b).abs() - 0.03).abs() < tol);
        }
    }

    #[test]
    fn lion_direction_ignores_positive_gradient_scale() {
        let state = LionState::default();
        let g = [0.4f32, -1.7, 0.02];
        for scale in [1.0f32, 7.0, 1e3] {
            let mut w = [1.0f32, 1.0, 1.0];
            let mut mu = [0.0f32; 3];
            let scaled: Vec<f32> = g.iter().map(|v| v * scale).collect();
            lion_step(&mut w, &scaled, &mut mu, &state).unwrap();
            let mut w_ref = [1.0f32, 1.0, 1.0];
            let mut mu_ref = [0.0f32; 3];
            lion_step(&mut w_ref, &g, &mut mu_ref, &state).unwrap();
            assert_eq!(w, w_ref);
        }
    }

    #[test]
    fn lion_shape_mismatch_is_contract_error() {
        let state = LionState::default();
        let mut w = [0.0f32; 2];
        let mut mu = [0.0f32; 2];
        assert!(matches!(
            lion_step(&mut w, &[1.0], &mut mu, &state),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn lion_descends_quadratic_until_step_band() {
        // f(w) = |w|^2 from [3, -2]: f strictly decreases until the first
        // coordinate magnitude drops below the step size.
        let state = LionState {
            lr: 0.05,
            ..Default::default()
        };
        let mut w = [3.0f32, -2.0];
        let mut mu = [0.0f32; 2];
        let f = |w: &[f32]| w.iter().map(|v| v * v).sum::<f32>();
        let mut prev = f(&w);
        let mut in_band = false;
        for _ in 0..100 {
            let g: Vec<f32> = w.iter().map(|v| 2.0 * v).collect();
            lion_step(&mut w, &g, &mut mu, &state).unwrap();
            let cur = f(&w);
            if !in_band && w.iter().any(|v| v.abs() < state.lr) {
                in_band = true;
            }
            if !in_band {
                assert!(cur < prev, "f rose from {prev} to {cur} outside band");
            }
            prev = cur;
        }
        assert!(in_band, "descent never reached the step band");
    }

    #[test]
    fn sgd_basics() {
        let state = SgdState {
            lr: 0.5,
            momentum: None,
        };
        let mut w = [1.0f32];
        sgd_step(&mut w, &[0.0], None, &state).unwrap();
        assert_eq!(w, [1.0]);
        sgd_step(&mut w, &[2.0], None, &state).unwrap();
        assert_eq!(w, [0.0]);
    }

    #[test]
    fn sgd_two_half_steps_equal_one_full_step() {
        let g = [0.7f32, -0.3];
        let mut full = [1.0f32, 2.0];
        sgd_step(&mut full, &g, None, &SgdState { lr: 0.2, momentum: None }).unwrap();

        let mut half = [1.0f32, 2.0];
        let half_state = SgdState { lr: 0.1, momentum: None };
        sgd_step(&mut half, &g, None, &half_state).unwrap();
        sgd_step(&mut half, &g, None, &half_state).unwrap();
        for (a, b) in full.iter().zip(&half) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn optimizer_zero_grads_and_determinism() {
        use crate::numerics::Tensor;
        let p = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap().with_grad();
        let params = vec![("p".to_string(), p.clone())];

        let run_step = |params: &[(String, Tensor)]| {
            let x = params[0].1.clone();
            let loss = x.mul(&x).unwrap().sum_all();
            loss.backward().unwrap();
            let mut opt = Optimizer::sgd(SgdState { lr: 0.1, momentum: None }, params);
            opt.step(params).unwrap();
            zero_grads(params);
        };

        run_step(&params);
        assert!(p.grad().is_none());
        assert_eq!(p.grad_or_zeros(), vec![0.0, 0.0]);
        // Idempotent.
        zero_grads(&params);
        assert!(p.grad().is_none());

        let after_first = p.to_vec();

        // Restart from the same point: identical trajectory.
        let q = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap().with_grad();
        let params_q = vec![("q".to_string(), q.clone())];
        run_step(&params_q);
        assert_eq!(q.to_vec(), after_first);
    }

    #[test]
    fn lion_holds_one_buffer_per_parameter() {
        let params: Vec<(String, Tensor)> = (0..3)
            .map(|i| (format!("p{i}"), Tensor::zeros(&[4]).with_grad()))
            .collect();
        let opt = Optimizer::lion(LionState::default(), &params).unwrap();
        assert_eq!(opt.buffers_per_param(), 1);
        match &opt {
            Optimizer::Lion { momentum, .. } => {
                assert_eq!(momentum.len(), params.len());
                for (buf, (_, p)) in momentum.iter().zip(&params) {
                    assert_eq!(buf.len(), p.len());
                }
            }
            _ => unreachable!(),
        }

        let plain = Optimizer::sgd(SgdState::default(), &params);
        assert_eq!(plain.buffers_per_param(), 0);
    }

    #[test]
    fn lion_rejects_bad_hyperparameters() {
        assert!(LionState { beta1: 1.5, ..Default::default() }.validate().is_err());
        assert!(LionState { lr: 0.0, ..Default::default() }.validate().is_err());
        assert!(LionState { weight_decay: -0.1, ..Default::default() }.validate().is_err());
    }
}
