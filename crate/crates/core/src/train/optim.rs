use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moment estimates; unused by SGD.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl OptimizerState {
    pub fn new(num_params: usize) -> Self {
        Self {
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One update of `params` in place.
///
/// The L2 term `l2 * θ` is added to the gradient of entries whose `decay` flag is set.
pub fn optimizer_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut OptimizerState,
    kind: OptimizerKind,
    learning_rate: f64,
    l2_weight: f64,
    decay: &[bool],
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), decay.len());
    if state.m.len() != params.len() {
        *state = OptimizerState::new(params.len());
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for i in 0..params.len() {
        let g = if decay[i] {
            grads[i] + l2_weight * params[i]
        } else {
            grads[i]
        };
        match kind {
            OptimizerKind::Sgd => params[i] -= learning_rate * g,
            OptimizerKind::Adam => {
                state.m[i] = ADAM_BETA1 * state.m[i] + (1.0 - ADAM_BETA1) * g;
                state.v[i] = ADAM_BETA2 * state.v[i] + (1.0 - ADAM_BETA2) * g * g;
                let m_hat = state.m[i] / bc1;
                let v_hat = state.v[i] / bc2;
                params[i] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
            }
        }
    }
}
