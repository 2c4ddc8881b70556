use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, LpnnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Mean squared error over the output units.
    Mse,
    /// Binary cross-entropy on a single logit.
    Logistic,
    /// Softmax cross-entropy on `k` logits.
    SoftmaxCe,
}

/// A single training target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target<'a> {
    Values(&'a [f64]),
    /// Class index; `0` or `1` for the logistic loss.
    Class(usize),
}

fn log_sum_exp(z: ArrayView1<f64>) -> f64 {
    let m = z.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Loss value and its gradient with respect to the prediction.
pub fn loss_and_grad(pred: ArrayView1<f64>, target: Target, kind: LossKind) -> Result<(f64, Array1<f64>)> {
    match (kind, target) {
        (LossKind::Mse, Target::Values(y)) => {
            if y.len() != pred.len() {
                return Err(shape_err(format!(
                    "prediction has {} outputs but target has {}",
                    pred.len(),
                    y.len()
                )));
            }
            let d = pred.len() as f64;
            let diff = &pred - &ArrayView1::from(y);
            let value = diff.mapv(|e| e * e).sum() / d;
            Ok((value, diff * (2.0 / d)))
        }
        (LossKind::Logistic, Target::Class(c)) => {
            if pred.len() != 1 {
                return Err(shape_err(format!("logistic loss needs one logit, got {}", pred.len())));
            }
            if c > 1 {
                return Err(LpnnError::Data(format!("binary label must be 0 or 1, got {c}")));
            }
            let z = pred[0];
            let y = c as f64;
            Ok((softplus(z) - y * z, Array1::from_elem(1, sigmoid(z) - y)))
        }
        (LossKind::SoftmaxCe, Target::Class(c)) => {
            if c >= pred.len() {
                return Err(LpnnError::Data(format!(
                    "class index {c} out of range for {} logits",
                    pred.len()
                )));
            }
            let lse = log_sum_exp(pred);
            let mut grad = pred.mapv(|z| (z - lse).exp());
            grad[c] -= 1.0;
            Ok((lse - pred[c], grad))
        }
        (kind, _) => Err(LpnnError::Config(format!("target type does not match loss {kind:?}"))),
    }
}

pub fn loss(pred: &[f64], target: Target, kind: LossKind) -> Result<f64> {
    loss_and_grad(ArrayView1::from(pred), target, kind).map(|(v, _)| v)
}
