use serde::{Deserialize, Serialize};

use super::{MlpParams, ParamGrads};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected adaptive-moment state over a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(num_params: usize, config: AdamConfig) -> Self {
        Self {
            first_moment: vec![0.0; num_params],
            second_moment: vec![0.0; num_params],
            step: 0,
            config,
        }
    }

    pub fn for_params(params: &MlpParams, config: AdamConfig) -> Self {
        Self::new(params.num_params(), config)
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }
}

/// One Adam step over flat buffers.
///
/// An all-zero gradient leaves parameters and moments untouched (the step
/// counter still advances), so a step with nothing to learn is a no-op for
/// any accumulated state. A non-finite gradient is rejected before anything
/// is modified; the error carries the offending flat index.
pub fn adam_step_flat(params: &mut [f64], grads: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.len() {
        return Err(Error::Usage(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.len()
        )));
    }
    if let Some(idx) = grads.iter().position(|g| !g.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite gradient {} at flat index {idx}",
            grads[idx]
        )));
    }
    state.step += 1;
    if grads.iter().all(|g| *g == 0.0) {
        return Ok(());
    }
    let AdamConfig { beta1, beta2, eps } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first_moment.iter_mut())
        .zip(state.second_moment.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam step on a single network; errors name the parameter location.
pub fn adam_step(params: &mut MlpParams, grads: &ParamGrads, state: &mut AdamState, lr: f64) -> Result<()> {
    if !grads.is_congruent(params) {
        return Err(Error::Usage("gradient layout does not match parameters".into()));
    }
    let mut flat = params.to_flat();
    let g = grads.to_flat();
    if let Some(idx) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite gradient {} at {}",
            g[idx],
            params.locate(idx)
        )));
    }
    adam_step_flat(&mut flat, &g, state, lr)?;
    params.set_flat(&flat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::{Activation, Dense};

    fn scalar_net(w: f64) -> MlpParams {
        MlpParams::new(
            vec![Dense {
                in_dim: 1,
                out_dim: 1,
                weight: vec![w],
                bias: vec![0.0],
            }],
            Activation::Tanh,
            Activation::Identity,
        )
        .unwrap()
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut p = vec![0.3, -1.2];
        let mut state = AdamState::new(2, AdamConfig::default());
        state.first_moment = vec![0.5, -0.1];
        state.second_moment = vec![0.2, 0.3];
        state.step = 7;
        let before = state.clone();
        adam_step_flat(&mut p, &[0.0, 0.0], &mut state, 1e-2).unwrap();
        assert_eq!(p, vec![0.3, -1.2]);
        assert_eq!(state.step, 8);
        assert_eq!(state.first_moment, before.first_moment);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![1.0];
        let mut state = AdamState::new(1, AdamConfig::default());
        adam_step_flat(&mut p, &[0.37], &mut state, 3e-4).unwrap();
        // m_hat = g, v_hat = g^2 => step = lr * g / (|g| + eps)
        let expected = 1.0 - 3e-4 * 0.37 / (0.37 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert!((1.0 - p[0] - 3e-4).abs() < 1e-10);
    }

    #[test]
    fn two_steps_match_hand_recursion() {
        let (b1, b2, eps, lr) = (0.9f64, 0.999f64, 1e-8, 0.01);
        let g = [0.5, -0.2];
        let mut p = vec![2.0];
        let mut state = AdamState::new(1, AdamConfig::default());
        let (mut m, mut v, mut x) = (0.0f64, 0.0f64, 2.0f64);
        for (t, gi) in g.iter().enumerate() {
            adam_step_flat(&mut p, &[*gi], &mut state, lr).unwrap();
            m = b1 * m + (1.0 - b1) * gi;
            v = b2 * v + (1.0 - b2) * gi * gi;
            let k = (t + 1) as i32;
            x -= lr * (m / (1.0 - b1.powi(k))) / ((v / (1.0 - b2.powi(k))).sqrt() + eps);
        }
        assert!((p[0] - x).abs() < 1e-15);
        // Frozen from an independent evaluation of the same recursion.
        assert!((p[0] - 1.986543941811651).abs() < 1e-12);
        assert_eq!(state.step, 2);
    }

    #[test]
    fn non_finite_gradient_names_location() {
        let mut net = scalar_net(1.0);
        let mut grads = ParamGrads::zeros_like(&net);
        grads.layers[0].bias[0] = f64::INFINITY;
        let mut state = AdamState::for_params(&net, AdamConfig::default());
        let err = adam_step(&mut net, &grads, &mut state, 1e-3).unwrap_err();
        assert!(err.to_string().contains("layer 0 bias[0]"), "{err}");
        assert_eq!(state.step, 0);
    }
}
