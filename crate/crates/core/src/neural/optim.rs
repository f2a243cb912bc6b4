//! Flat-parameter optimizers with the learning-rate schedule
//! `lr_t = lr0 / (1 + decay * t)`.

use super::{NeuralError, OptimizerKind};

/// SGD with Nesterov lookahead in its literal form: the gradient is taken at
/// the lookahead point `theta + mu * v`, so the parameters handed out between
/// steps ARE the lookahead point. `finalize` writes back the true parameters.
///
/// Per step: `v <- mu*v - lr_t*grad(theta + mu*v)`, `theta <- theta + v`.
#[derive(Clone, Debug)]
pub struct SgdNesterov {
    momentum: f64,
    velocity: Vec<f64>,
    theta: Vec<f64>,
    iterations: u64,
}

impl SgdNesterov {
    pub fn new(momentum: f64, initial_params: &[f64]) -> Self {
        SgdNesterov {
            momentum,
            velocity: vec![0.0; initial_params.len()],
            theta: initial_params.to_vec(),
            iterations: 0,
        }
    }

    /// `params` holds the lookahead point; `grads` its gradient.
    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        decay: f64,
    ) -> Result<(), NeuralError> {
        check_len(self.theta.len(), params.len())?;
        check_len(self.theta.len(), grads.len())?;
        let lr_t = lr / (1.0 + decay * self.iterations as f64);
        let mu = self.momentum;
        for i in 0..params.len() {
            self.velocity[i] = mu * self.velocity[i] - lr_t * grads[i];
            self.theta[i] += self.velocity[i];
            params[i] = self.theta[i] + mu * self.velocity[i];
        }
        self.iterations += 1;
        Ok(())
    }

    /// Replace the lookahead parameters with the true iterate.
    pub fn finalize(&self, params: &mut [f64]) {
        params.copy_from_slice(&self.theta);
    }
}

/// Bias-corrected Adam.
#[derive(Clone, Debug)]
pub struct Adam {
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64, epsilon: f64, n_params: usize) -> Self {
        Adam {
            beta1,
            beta2,
            epsilon,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        decay: f64,
    ) -> Result<(), NeuralError> {
        check_len(self.m.len(), params.len())?;
        check_len(self.m.len(), grads.len())?;
        let lr_t = lr / (1.0 + decay * self.t as f64);
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr_t * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

/// Runtime-selected optimizer state.
#[derive(Clone, Debug)]
pub enum OptimizerState {
    Sgd(SgdNesterov),
    Adam(Adam),
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, initial_params: &[f64]) -> Self {
        match kind {
            OptimizerKind::SgdNesterov { momentum } => {
                OptimizerState::Sgd(SgdNesterov::new(momentum, initial_params))
            }
            OptimizerKind::Adam {
                beta1,
                beta2,
                epsilon,
            } => OptimizerState::Adam(Adam::new(beta1, beta2, epsilon, initial_params.len())),
        }
    }

    pub fn step(
        &mut self,
        params: &mut [f64],
        grads: &[f64],
        lr: f64,
        decay: f64,
    ) -> Result<(), NeuralError> {
        match self {
            OptimizerState::Sgd(s) => s.step(params, grads, lr, decay),
            OptimizerState::Adam(a) => a.step(params, grads, lr, decay),
        }
    }

    pub fn finalize(&self, params: &mut [f64]) {
        if let OptimizerState::Sgd(s) = self {
            s.finalize(params);
        }
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), NeuralError> {
    if expected != got {
        return Err(NeuralError::ShapeMismatch { expected, got });
    }
    Ok(())
}
