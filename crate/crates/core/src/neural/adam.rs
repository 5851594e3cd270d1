use ndarray::Zip;

use super::{Dense, Gradients, Mlp};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one network.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Dense>,
    second: Vec<Dense>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &Mlp, config: AdamConfig) -> Self {
        let zeros = || params.zero_gradients().layers;
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. Non-finite gradients leave both the
/// parameters and the optimiser state untouched.
pub fn adam_step(params: &mut Mlp, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    let shapes_match = params.layers.len() == grads.layers.len()
        && params.layers.len() == state.first.len()
        && params
            .layers
            .iter()
            .zip(&grads.layers)
            .all(|(p, g)| p.weights.dim() == g.weights.dim() && p.bias.dim() == g.bias.dim());
    if !shapes_match {
        return Err(Error::shape(
            format!("{:?}", params.layer_sizes()),
            "gradients of a different shape",
        ));
    }
    if !grads.is_finite() {
        return Err(Error::NonFinite("gradient passed to adam_step; update rejected".into()));
    }
    state.step += 1;
    let AdamConfig { lr, beta1, beta2, eps } = state.config;
    let t = state.step as f64;
    let c1 = 1.0 - beta1.powf(t);
    let c2 = 1.0 - beta2.powf(t);
    let update = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    };
    let (first, second) = (&mut state.first, &mut state.second);
    for (((p, g), m), v) in params.layers_mut().iter_mut().zip(&grads.layers).zip(first).zip(second) {
        Zip::from(&mut p.weights)
            .and(&mut m.weights)
            .and(&mut v.weights)
            .and(&g.weights)
            .for_each(|p, m, v, &g| update(p, m, v, g));
        Zip::from(&mut p.bias)
            .and(&mut m.bias)
            .and(&mut v.bias)
            .and(&g.bias)
            .for_each(|p, m, v, &g| update(p, m, v, g));
    }
    Ok(())
}
