//! Adam optimizer over a flat parameter vector.

use crate::error::{McnError, Result};

/// Optimizer state: first/second moment buffers mirroring the parameter
/// vector, plus the step counter and hyperparameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Standard defaults: beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8.
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        AdamState {
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update, in place.
///
/// Rejects the step (leaving parameters and state untouched) on shape
/// mismatch or any non-finite gradient component.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(McnError::DimensionMismatch(format!(
            "adam step: params {}, grads {}, state {}",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(McnError::NonFinite(format!(
            "gradient component {i} is {}",
            grads[i]
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    for ((p, &g), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= state.learning_rate * m_hat / (v_hat.sqrt() + state.epsilon);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![0.3, -1.2, 4.0];
        let mut state = AdamState::new(3, 0.1);
        for _ in 0..10 {
            adam_step(&mut params, &[0.0, 0.0, 0.0], &mut state).unwrap();
        }
        assert_eq!(params, vec![0.3, -1.2, 4.0]);
        assert_eq!(state.step_count(), 10);
    }

    #[test]
    fn first_step_hand_computed() {
        // m_hat = g, v_hat = g^2 at t=1, so the update is lr * g/(|g| + eps).
        let mut params = vec![0.0];
        let mut state = AdamState::new(1, 0.1);
        adam_step(&mut params, &[1.0], &mut state).unwrap();
        assert!((params[0] + 0.1).abs() < 1e-8, "param {}", params[0]);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn identical_runs_give_identical_trajectories() {
        let run = || {
            let mut params = vec![0.5, -0.5];
            let mut state = AdamState::new(2, 0.01);
            for i in 0..50 {
                let g = [params[0] * 2.0 + i as f64 * 0.01, params[1].sin()];
                adam_step(&mut params, &g, &mut state).unwrap();
            }
            params
        };
        let a = run();
        let b = run();
        assert_eq!(a[0].to_bits(), b[0].to_bits());
        assert_eq!(a[1].to_bits(), b[1].to_bits());
    }

    #[test]
    fn rejects_non_finite_gradient() {
        let mut params = vec![1.0];
        let before = params.clone();
        let mut state = AdamState::new(1, 0.1);
        assert!(adam_step(&mut params, &[f64::NAN], &mut state).is_err());
        assert_eq!(params, before);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut params = vec![1.0, 2.0];
        let mut state = AdamState::new(2, 0.1);
        assert!(adam_step(&mut params, &[0.1], &mut state).is_err());
    }
}
