//! Adam with bias correction, one moment pair per parameter.

use super::{AutodiffError, Parameter, Result, Tensor};

/// First and second moment buffers plus the per-parameter step count.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
}

impl AdamState {
    pub fn zeros(n: usize) -> Self {
        Self { step: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }
}

/// Bias-corrected Adam over a fixed parameter list.
///
/// State slots are positional: construct with the same parameter order on
/// every run and across checkpoint restore, or moments land on the wrong
/// tensors.
#[derive(Debug, Clone)]
pub struct AdamOptimizer {
    lr: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    states: Vec<AdamState>,
}

impl AdamOptimizer {
    pub fn new(lr: f32, beta1: f32, beta2: f32, eps: f32, params: &[&Parameter]) -> Self {
        let states = params.iter().map(|p| AdamState::zeros(p.value().numel())).collect();
        Self { lr, beta1, beta2, eps, states }
    }

    pub fn lr(&self) -> f32 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f32) {
        self.lr = lr;
    }

    pub fn states(&self) -> &[AdamState] {
        &self.states
    }

    /// Restore moment buffers, validating count and per-slot lengths.
    pub fn set_states(&mut self, states: Vec<AdamState>) -> Result<()> {
        if states.len() != self.states.len() {
            return Err(AutodiffError::Invalid(format!(
                "optimizer has {} parameter slots, checkpoint provides {}",
                self.states.len(),
                states.len()
            )));
        }
        for (i, (new, old)) in states.iter().zip(&self.states).enumerate() {
            if new.m.len() != old.m.len() || new.v.len() != old.v.len() {
                return Err(AutodiffError::Invalid(format!(
                    "moment length mismatch in slot {i}: {} vs {}",
                    new.m.len(),
                    old.m.len()
                )));
            }
        }
        self.states = states;
        Ok(())
    }

    /// Apply one update from `grads[i]` to `params[i]`.
    ///
    /// Every gradient must be present and match its parameter's element
    /// count; a missing one means the caller forgot to export it from the
    /// graph, which this surfaces by name instead of silently skipping.
    pub fn step(&mut self, params: &mut [&mut Parameter], grads: &[Option<Tensor>]) -> Result<()> {
        if params.len() != self.states.len() || grads.len() != self.states.len() {
            return Err(AutodiffError::Invalid(format!(
                "step called with {} params / {} grads for {} slots",
                params.len(),
                grads.len(),
                self.states.len()
            )));
        }
        for ((param, grad), state) in params.iter_mut().zip(grads).zip(&mut self.states) {
            let Some(grad) = grad else {
                return Err(AutodiffError::MissingGrad { name: param.name().to_string() });
            };
            if grad.numel() != param.value().numel() {
                return Err(AutodiffError::Invalid(format!(
                    "gradient for {} has {} elements, parameter has {}",
                    param.name(),
                    grad.numel(),
                    param.value().numel()
                )));
            }
            state.step += 1;
            // Bias corrections in f64: beta^t underflows f32 range for
            // long runs and the early-step ratios lose precision there.
            let t = state.step as i32;
            let c1 = (1.0 - (self.beta1 as f64).powi(t)).recip() as f32;
            let c2 = (1.0 - (self.beta2 as f64).powi(t)).recip() as f32;
            let data = param.value_mut().data_mut();
            for (((p, g), m), v) in
                data.iter_mut().zip(grad.data()).zip(&mut state.m).zip(&mut state.v)
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                *p -= self.lr * (*m * c1) / ((*v * c2).sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
