use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{AutodiffError, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments with decoupled weight decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamState {
    /// Zeroed moments matching each parameter's size.
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>, weight_decay: f64) -> Self {
        let sizes: Vec<usize> = params.into_iter().map(Tensor::numel).collect();
        Self {
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            weight_decay,
        }
    }

    /// Applies one update using the gradients stored on the parameters
    /// (a missing gradient counts as zero).
    pub fn step(&mut self, params: &mut [&mut Tensor], lr: f64) -> Result<(), AutodiffError> {
        let grads: Vec<Vec<f64>> = params
            .iter()
            .map(|p| p.grad().map_or_else(|| vec![0.0; p.numel()], <[f64]>::to_vec))
            .collect();
        let views: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
        adam_step(params, &views, self, lr)
    }
}

/// Bias-corrected Adam update followed by `θ -= lr · wd · θ`.
pub fn adam_step(
    params: &mut [&mut Tensor],
    grads: &[&[f64]],
    state: &mut AdamState,
    lr: f64,
) -> Result<(), AutodiffError> {
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(AutodiffError::InvalidData(format!("learning rate {lr} must be finite and >= 0")));
    }
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(AutodiffError::ShapeMismatch {
            op: "adam_step",
            left: vec![params.len()],
            right: vec![grads.len(), state.first_moment.len()],
        });
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.numel() != g.len() || p.numel() != state.first_moment[i].len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "adam_step",
                left: p.shape().to_vec(),
                right: vec![g.len()],
            });
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps, wd) = (state.beta1, state.beta2, state.eps, state.weight_decay);

    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = &mut state.first_moment[i];
        let v = &mut state.second_moment[i];
        for (j, theta) in p.data_mut().iter_mut().enumerate() {
            let gj = g[j];
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let m_hat = m[j] / bc1;
            let v_hat = v[j] / bc2;
            let update = lr * m_hat / (v_hat.sqrt() + eps);
            let decay = lr * wd * *theta;
            *theta = *theta - update - decay;
        }
    }
    Ok(())
}

/// Cosine annealing from `base_lr` at step 0 to `min_lr` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CosineSchedule {
    pub base_lr: f64,
    pub total_steps: u64,
    pub min_lr: f64,
}

impl CosineSchedule {
    pub fn new(base_lr: f64, total_steps: u64) -> Self {
        Self {
            base_lr,
            total_steps,
            min_lr: 0.0,
        }
    }
}

pub fn cosine_lr(schedule: &CosineSchedule, step: u64) -> Result<f64, AutodiffError> {
    if schedule.total_steps == 0 || step > schedule.total_steps {
        return Err(AutodiffError::StepOutOfRange {
            step,
            total: schedule.total_steps,
        });
    }
    let progress = step as f64 / schedule.total_steps as f64;
    Ok(schedule.min_lr
        + 0.5 * (schedule.base_lr - schedule.min_lr) * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Inverted-dropout mask: each entry is `1/(1-rate)` with probability
/// `1-rate`, else 0. Evaluation mode returns all ones.
pub fn dropout_mask<R: Rng + ?Sized>(shape: &[usize], rate: f64, rng: &mut R, training: bool) -> Tensor {
    assert!((0.0..1.0).contains(&rate), "dropout rate {rate} outside [0, 1)");
    let mut mask = Tensor::ones(shape);
    if !training || rate == 0.0 {
        return mask;
    }
    let keep = 1.0 / (1.0 - rate);
    for x in mask.data_mut() {
        *x = if rng.random::<f64>() < rate { 0.0 } else { keep };
    }
    mask
}
