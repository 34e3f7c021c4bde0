use serde::{Deserialize, Serialize};

use super::{NumericError, Real, Tensor};

fn check_shapes(op: &'static str, params: &[Tensor], grads: &[Tensor]) -> Result<(), NumericError> {
    if params.len() != grads.len() {
        return Err(NumericError::ShapeMismatch {
            op,
            lhs: vec![params.len()],
            rhs: vec![grads.len()],
        });
    }
    for (p, g) in params.iter().zip(grads) {
        if !p.same_shape(g) {
            return Err(NumericError::ShapeMismatch {
                op,
                lhs: p.shape().to_vec(),
                rhs: g.shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// Plain gradient descent `p ← p − lr·g`, with one learning rate per tensor.
pub fn sgd_step(params: &mut [Tensor], grads: &[Tensor], lrs: &[Real]) -> Result<(), NumericError> {
    check_shapes("sgd_step", params, grads)?;
    if lrs.len() != params.len() {
        return Err(NumericError::IndexOutOfBounds { op: "sgd_step" });
    }
    for ((p, g), &lr) in params.iter_mut().zip(grads).zip(lrs) {
        p.add_scaled(g, -lr)?;
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: Real,
    pub beta2: Real,
    pub eps: Real,
    /// Decoupled weight decay, applied as `p ← p − lr·wd·p`.
    pub weight_decay: Real,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment accumulators for bias-corrected Adam.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &[Tensor], config: AdamConfig) -> Self {
        AdamState {
            config,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Tensor] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor] {
        &self.v
    }
}

/// One Adam update with per-tensor learning rates.
pub fn adam_step(state: &mut AdamState, params: &mut [Tensor], grads: &[Tensor], lrs: &[Real]) -> Result<(), NumericError> {
    check_shapes("adam_step", params, grads)?;
    check_shapes("adam_step", params, &state.m)?;
    if lrs.len() != params.len() {
        return Err(NumericError::IndexOutOfBounds { op: "adam_step" });
    }
    state.step += 1;
    let AdamConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
    } = state.config;
    let t = state.step as i32;
    let bc1 = 1.0 - beta1.powi(t);
    let bc2 = 1.0 - beta2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let lr = lrs[i];
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        for (mj, gj) in m.iter_mut().zip(g) {
            *mj = beta1 * *mj + (1.0 - beta1) * gj;
        }
        let v = state.v[i].data_mut();
        for (vj, gj) in v.iter_mut().zip(g) {
            *vj = beta2 * *vj + (1.0 - beta2) * gj * gj;
        }
        let (m, v) = (state.m[i].data(), state.v[i].data());
        for (j, pj) in p.data_mut().iter_mut().enumerate() {
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            *pj -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *pj);
        }
    }
    Ok(())
}

/// Linear warm-up to `base_lr` over the first `warmup_frac · total_steps`
/// steps, then half-cosine decay to zero at `total_steps`.
pub fn cosine_warmup_lr(step: usize, total_steps: usize, warmup_frac: Real, base_lr: Real) -> Real {
    if total_steps == 0 {
        return base_lr;
    }
    let step = step.min(total_steps) as Real;
    let total = total_steps as Real;
    let warmup = (warmup_frac.clamp(0.0, 1.0) * total).round();
    if step < warmup {
        return base_lr * step / warmup;
    }
    let span = total - warmup;
    if span <= 0.0 {
        return base_lr;
    }
    let progress = (step - warmup) / span;
    0.5 * base_lr * (1.0 + (std::f64::consts::PI as Real * progress).cos())
}
