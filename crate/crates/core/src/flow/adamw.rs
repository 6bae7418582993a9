//! Decoupled-weight-decay Adam and the warmup/cosine learning-rate
//! schedule.

use super::params::FlowModel;
use crate::num::{c, Real};

/// Optimizer constants; the betas and epsilon are the standard defaults.
#[derive(Debug, Clone, Copy)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers, shaped like the model.
pub struct AdamState<T> {
    pub m: FlowModel<T>,
    pub v: FlowModel<T>,
}

impl<T: Real> AdamState<T> {
    pub fn new(model: &FlowModel<T>) -> Self {
        Self {
            m: model.zero_like(),
            v: model.zero_like(),
        }
    }
}

/// Linear ramp 0 -> `base_lr` over `warmup` steps, then cosine decay to 0
/// at `total` steps.
pub fn lr_at_step(step: usize, base_lr: f64, warmup: usize, total: usize) -> f64 {
    if warmup > 0 && step < warmup {
        return base_lr * step as f64 / warmup as f64;
    }
    if step >= total {
        return 0.0;
    }
    let span = (total - warmup).max(1) as f64;
    let progress = (step - warmup) as f64 / span;
    base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

/// One AdamW update. `step` starts at 1. Weight decay is decoupled:
/// `p -= lr * wd * p` on every trainable tensor, independent of the
/// gradient path. Buffers (batch-norm running stats) are untouched.
pub fn adamw_step<T: Real>(
    model: &mut FlowModel<T>,
    grads: &FlowModel<T>,
    state: &mut AdamState<T>,
    step: usize,
    lr: f64,
    weight_decay: f64,
    hyper: &AdamHyper,
) {
    debug_assert!(step >= 1);
    let b1: T = c(hyper.beta1);
    let b2: T = c(hyper.beta2);
    let eps: T = c(hyper.eps);
    let lr_t: T = c(lr);
    let bias1: T = c(1.0 - hyper.beta1.powi(step as i32));
    let bias2: T = c(1.0 - hyper.beta2.powi(step as i32));
    let decay: T = c(lr * weight_decay);

    let mut params = model.tensors_mut();
    let gt = grads.tensors();
    let mut ms = state.m.tensors_mut();
    let mut vs = state.v.tensors_mut();
    for i in 0..params.len() {
        if !params[i].2 {
            continue;
        }
        debug_assert_eq!(params[i].0, gt[i].0);
        let p = params[i].1.as_mut_slice();
        let g = gt[i].1.as_slice();
        let m = ms[i].1.as_mut_slice();
        let v = vs[i].1.as_mut_slice();
        for k in 0..p.len() {
            m[k] = b1 * m[k] + (T::ONE - b1) * g[k];
            v[k] = b2 * v[k] + (T::ONE - b2) * g[k] * g[k];
            let m_hat = m[k] / bias1;
            let v_hat = v[k] / bias2;
            p[k] -= lr_t * m_hat / (v_hat.sqrt() + eps);
            p[k] -= decay * p[k];
        }
    }
}
