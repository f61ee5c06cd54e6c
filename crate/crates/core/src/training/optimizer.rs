use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::autodiff::{ParamSet, Tensor};

/// Adam hyperparameters plus optional global-norm clipping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the full gradient when its L2 norm exceeds this value.
    pub clip_norm: Option<f64>,
}

impl AdamConfig {
    pub const DEFAULT_LR: f64 = 0.0005;
    pub const DEFAULT_CLIP_NORM: f64 = 5.0;
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: Self::DEFAULT_LR,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(Self::DEFAULT_CLIP_NORM),
        }
    }
}

/// First and second moments for every parameter tensor.
#[derive(Clone, Debug)]
pub struct OptimizerState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Tensor<f32>>,
    second: Vec<Tensor<f32>>,
}

/// What one update did.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
    pub clipped: bool,
}

impl OptimizerState {
    pub fn new(params: &ParamSet<f32>, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<f32>> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        OptimizerState {
            config,
            step: 0,
            second: zeros.clone(),
            first: zeros,
        }
    }

    pub fn first_moment(&self, i: usize) -> &Tensor<f32> {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor<f32> {
        &self.second[i]
    }
}

/// One bias-corrected Adam update. Gradients are validated before anything
/// is modified, so a rejected step leaves parameters and state untouched.
pub fn adam_step(
    params: &mut ParamSet<f32>,
    grads: &[Tensor<f32>],
    state: &mut OptimizerState,
) -> Result<StepStats, TrainError> {
    if grads.len() != params.len() || state.first.len() != params.len() {
        return Err(TrainError::GradientShape {
            name: format!("<{} tensors>", params.len()),
            expected: vec![params.len()],
            found: vec![grads.len()],
        });
    }
    let mut sq = 0.0f64;
    for (i, g) in grads.iter().enumerate() {
        if g.shape() != params.tensor(i).shape() {
            return Err(TrainError::GradientShape {
                name: params.name(i).to_string(),
                expected: params.tensor(i).shape().to_vec(),
                found: g.shape().to_vec(),
            });
        }
        if !g.all_finite() {
            return Err(TrainError::NonFiniteGradient {
                tensor: params.name(i).to_string(),
            });
        }
        sq += g.data().iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>();
    }
    let grad_norm = sq.sqrt();
    let scale = match state.config.clip_norm {
        Some(max) if grad_norm > max => max / grad_norm,
        _ => 1.0,
    };

    state.step += 1;
    let c = &state.config;
    let t = state.step as i32;
    let correct1 = 1.0 - c.beta1.powi(t);
    let correct2 = 1.0 - c.beta2.powi(t);
    let (b1, b2) = (c.beta1 as f32, c.beta2 as f32);
    let step_size = (c.lr / correct1) as f32;
    let inv_sqrt_c2 = (1.0 / correct2.sqrt()) as f32;
    let eps = c.eps as f32;
    let scale = scale as f32;

    for (i, g) in grads.iter().enumerate() {
        let p = params.tensor_mut(i).data_mut();
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (((p, m), v), &g) in p.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
            let g = g * scale;
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            *p -= step_size * *m / (v.sqrt() * inv_sqrt_c2 + eps);
        }
    }
    Ok(StepStats {
        grad_norm,
        clipped: scale < 1.0,
    })
}
