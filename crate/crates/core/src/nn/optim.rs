use std::collections::BTreeMap;

use super::layers::Parameters;
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self { lr, ..Self::default() }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Adam state: step count plus first/second moments keyed by parameter name.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    moments: BTreeMap<String, Moments>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn first_moment(&self, name: &str) -> Option<&[f64]> {
        self.moments.get(name).map(|m| m.m.as_slice())
    }
}

/// One bias-corrected Adam update of a flat parameter slice. `step` is the
/// 1-based index of this update.
pub fn adam_update(param: &mut [f64], grad: &[f64], m: &mut [f64], v: &mut [f64], step: u64, cfg: &AdamConfig) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / bc1;
        let v_hat = v[i] / bc2;
        param[i] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
}

/// Applies one Adam step to every parameter of `params`. Parameters absent
/// from `grads` are treated as having zero gradient.
pub fn adam_step<P: Parameters + ?Sized>(
    params: &mut P,
    grads: &BTreeMap<String, Tensor>,
    state: &mut OptimizerState,
) -> Result<()> {
    for (name, g) in grads {
        if !g.is_finite() {
            return Err(Error::NonFinite { stage: format!("gradient of {name}") });
        }
    }
    state.step += 1;
    let step = state.step;
    let cfg = state.config;
    let moments = &mut state.moments;
    let mut shape_err = None;
    params.visit_mut(&mut |name, p| {
        let n = p.len();
        let slot = moments.entry(name.to_string()).or_insert_with(|| Moments {
            m: vec![0.0; n],
            v: vec![0.0; n],
        });
        let zeros;
        let g = match grads.get(name) {
            Some(g) if g.len() == n => g.data(),
            Some(g) => {
                shape_err = Some(format!("gradient for {name} has {} values, parameter has {n}", g.len()));
                return;
            }
            None => {
                zeros = vec![0.0; n];
                &zeros
            }
        };
        adam_update(p.data_mut(), g, &mut slot.m, &mut slot.v, step, &cfg);
    });
    match shape_err {
        Some(msg) => Err(Error::Shape(msg)),
        None => Ok(()),
    }
}
