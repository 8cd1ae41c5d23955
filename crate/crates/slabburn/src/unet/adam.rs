//! Adam parameter updates with bias correction.

use super::train::TrainConfig;
use super::UNetParams;

/// First and second moment estimates shaped like the trainable parameters,
/// plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub m: UNetParams,
    pub v: UNetParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &UNetParams) -> Self {
        Self {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

/// One Adam step over every trainable array:
/// `m = b1 m + (1-b1) g`, `v = b2 v + (1-b2) g^2`, then the bias-corrected
/// update `p -= lr * m_hat / (sqrt(v_hat) + eps)`.
pub fn adam_step(
    params: &mut UNetParams,
    grads: &UNetParams,
    state: &mut AdamState,
    cfg: &TrainConfig,
) {
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    let p_slices = params.trainable_slices_mut();
    let g_slices = grads.trainable_slices();
    let m_slices = state.m.trainable_slices_mut();
    let v_slices = state.v.trainable_slices_mut();
    for (((p, g), m), v) in p_slices
        .into_iter()
        .zip(g_slices)
        .zip(m_slices)
        .zip(v_slices)
    {
        for i in 0..p.len() {
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}
