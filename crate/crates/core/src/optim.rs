//! ADAM optimizer and the warmup learning-rate schedule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::params::Param;

/// Optimizer state: one first/second moment buffer per parameter plus a
/// shared step counter. Defaults are β1=0.9, β2=0.99, ε=1e-9.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    slots: BTreeMap<String, Moments>,
}

#[derive(Debug, Clone)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Default for AdamState {
    fn default() -> Self {
        AdamState::new(0.9, 0.99, 1e-9)
    }
}

impl AdamState {
    pub fn new(beta1: f64, beta2: f64, epsilon: f64) -> Self {
        AdamState {
            step: 0,
            beta1,
            beta2,
            epsilon,
            slots: BTreeMap::new(),
        }
    }

    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        self.slots.get(name).map(|s| (&s.m[..], &s.v[..]))
    }
}

/// One bias-corrected ADAM step over `params`, reading each parameter's
/// accumulated gradient. Any non-finite gradient rejects the whole step and
/// names the offending parameter; nothing is updated in that case.
pub fn adam_update(params: &[Param], state: &mut AdamState, lrate: f64) -> Result<()> {
    if lrate < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "adam_update: negative learning rate {lrate}"
        )));
    }
    let grads: Vec<Vec<f64>> = params
        .iter()
        .map(|p| p.value().grad_or_zeros())
        .collect();
    for (p, g) in params.iter().zip(&grads) {
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of parameter `{}`",
                p.name()
            )));
        }
        let t = p.value();
        if t.numel() != g.len() {
            return Err(Error::ShapeMismatch {
                op: "adam_update",
                lhs: t.shape().to_vec(),
                rhs: vec![g.len()],
            });
        }
    }
    state.step += 1;
    let t = state.step;
    let bc1 = 1.0 - state.beta1.powi(t as i32);
    let bc2 = 1.0 - state.beta2.powi(t as i32);
    for (p, g) in params.iter().zip(&grads) {
        let value = p.value();
        let slot = state
            .slots
            .entry(p.name().to_string())
            .or_insert_with(|| Moments {
                m: vec![0.0; value.numel()],
                v: vec![0.0; value.numel()],
            });
        let mut data = value.data().to_vec();
        for i in 0..data.len() {
            slot.m[i] = state.beta1 * slot.m[i] + (1.0 - state.beta1) * g[i];
            slot.v[i] = state.beta2 * slot.v[i] + (1.0 - state.beta2) * g[i] * g[i];
            let m_hat = slot.m[i] / bc1;
            let v_hat = slot.v[i] / bc2;
            data[i] -= lrate * m_hat / (v_hat.sqrt() + state.epsilon);
        }
        p.replace_data(data);
    }
    Ok(())
}

/// Rescales all gradients in place so their global L2 norm is at most
/// `max_norm`. Returns the pre-clip norm.
pub fn clip_grad_norm(params: &[Param], max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for p in params {
        for g in p.value().grad_or_zeros() {
            sq += g * g;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for p in params {
            let t = p.value();
            if let Some(g) = t.grad() {
                t.clear_grad();
                crate::tensor::accum_into(&t, &g.iter().map(|v| v * s).collect::<Vec<_>>());
            }
        }
    }
    norm
}

/// Warmup-then-decay learning-rate schedule.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ScheduleConfig {
    pub k: f64,
    pub d_model: usize,
    pub warmup: u64,
}

impl ScheduleConfig {
    pub fn new(k: f64, d_model: usize, warmup: u64) -> Result<Self> {
        if warmup < 1 {
            return Err(Error::InvalidArgument("schedule: warmup must be >= 1".into()));
        }
        if k <= 0.0 {
            return Err(Error::InvalidArgument("schedule: k must be > 0".into()));
        }
        Ok(ScheduleConfig { k, d_model, warmup })
    }
}

/// lrate = k · d_model^(−0.5) · min(step^(−0.5), step · warmup^(−1.5)).
/// Strictly increasing below the warmup step, decreasing above it.
pub fn noam_lrate(step: u64, cfg: &ScheduleConfig) -> f64 {
    assert!(step >= 1, "noam_lrate: step must be >= 1");
    let s = step as f64;
    let w = cfg.warmup as f64;
    cfg.k * (cfg.d_model as f64).powf(-0.5) * (s.powf(-0.5)).min(s * w.powf(-1.5))
}
