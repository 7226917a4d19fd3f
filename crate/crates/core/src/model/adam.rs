use super::{Gradient, SegModel};
use crate::error::{Error, Result};

pub const DEFAULT_LEARNING_RATE: f64 = 0.001;
pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Adam moments and hyperparameters for a flat `weights ++ [bias]` vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: DEFAULT_BETA1,
            beta2: DEFAULT_BETA2,
            epsilon: DEFAULT_EPSILON,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
        }
    }

    pub(crate) fn from_parts(first: Vec<f64>, second: Vec<f64>, step: u64) -> Self {
        let mut adam = Self::new(first.len(), DEFAULT_LEARNING_RATE);
        adam.first_moment = first;
        adam.second_moment = second;
        adam.step = step;
        adam
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    /// One bias-corrected Adam update. Rejects non-finite gradients before
    /// touching either the model or the moments.
    pub fn step(&mut self, model: &mut SegModel, grad: &Gradient) -> Result<()> {
        let n = model.param_count();
        if grad.weights.len() + 1 != n || self.first_moment.len() != n {
            return Err(Error::Dimension(format!(
                "gradient has {} entries, model has {n} parameters",
                grad.weights.len() + 1
            )));
        }
        if let Some(g) = grad.iter().find(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("gradient component {g}")));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let mut delta = Vec::with_capacity(n);
        for (i, g) in grad.iter().enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            delta.push(-self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon));
        }
        model.apply_update(&delta);
        Ok(())
    }
}

/// Functional form of [`Adam::step`].
pub fn adam_step(model: &mut SegModel, state: &mut Adam, grad: &Gradient) -> Result<()> {
    state.step(model, grad)
}
