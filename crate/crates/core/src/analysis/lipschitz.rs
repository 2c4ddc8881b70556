use serde::{Deserialize, Serialize};

use super::norm::operator_norm;
use crate::error::{LpnnError, Result};
use crate::network::LadderNetwork;

/// Norm-based bounds for one layer at input radius `R`:
/// `‖h^ℓ‖ ≤ P_ℓ R^{ℓ+1}` and `‖∇h^ℓ‖ ≤ (ℓ+1) P_ℓ R^ℓ` with `P_ℓ = ∏_{k≤ℓ} ‖V^k‖ ‖W^k‖`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerBound {
    /// 1-based layer index ℓ.
    pub layer: usize,
    pub w_norm: f64,
    pub v_norm: f64,
    pub norm_product: f64,
    pub h_bound: f64,
    pub grad_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzReport {
    pub radius: f64,
    pub layers: Vec<LayerBound>,
}

impl LipschitzReport {
    /// `‖h^ℓ‖` bound at an arbitrary radius (ℓ is 1-based).
    pub fn h_bound(&self, layer: usize, radius: f64) -> f64 {
        self.layers[layer - 1].norm_product * radius.powi(layer as i32 + 1)
    }

    /// `‖∇h^ℓ‖` bound at an arbitrary radius (ℓ is 1-based).
    pub fn grad_bound(&self, layer: usize, radius: f64) -> f64 {
        (layer as f64 + 1.0) * self.layers[layer - 1].norm_product * radius.powi(layer as i32)
    }

    /// Bound on the Lipschitz constant of the network output over the ball of radius `R`.
    pub fn output_lipschitz(&self) -> f64 {
        self.layers.last().map_or(0.0, |b| b.grad_bound)
    }
}

/// Per-layer output and gradient norm bounds for inputs with `‖x‖ ≤ radius`.
pub fn lipschitz_bounds(net: &LadderNetwork, radius: f64) -> Result<LipschitzReport> {
    if !net.is_intercept_free() {
        return Err(LpnnError::Precondition(
            "Lipschitz bounds need an intercept-free network without batch norm".into(),
        ));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(LpnnError::Config(format!("radius must be positive, got {radius}")));
    }
    let mut product = 1.0;
    let mut report = LipschitzReport {
        radius,
        layers: Vec::with_capacity(net.depth()),
    };
    for (i, layer) in net.layers().iter().enumerate() {
        let w_norm = operator_norm(layer.w().view());
        let v_norm = operator_norm(layer.v().view());
        product *= w_norm * v_norm;
        let l = i + 1;
        report.layers.push(LayerBound {
            layer: l,
            w_norm,
            v_norm,
            norm_product: product,
            h_bound: product * radius.powi(l as i32 + 1),
            grad_bound: (l as f64 + 1.0) * product * radius.powi(l as i32),
        });
    }
    Ok(report)
}
