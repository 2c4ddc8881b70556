use ndarray::{Array2, ArrayView1, Axis};

use crate::error::{shape_err, LpnnError, Result};
use crate::network::LadderNetwork;

pub(crate) fn require_no_batch_norm(net: &LadderNetwork, what: &str) -> Result<()> {
    if net.batch_norm().is_some() {
        return Err(LpnnError::Precondition(format!(
            "{what} needs batch norm folded into the weights first"
        )));
    }
    Ok(())
}

/// Exact Jacobian `∂h^L/∂x` (`d_L × d_0`).
///
/// Uses `∇h^ℓ = diag(V^ℓ x) W^ℓ ∇h^{ℓ-1} + diag(W^ℓ h^{ℓ-1} + b^ℓ) V^ℓ` with `∇h^0 = I`.
pub fn input_jacobian(net: &LadderNetwork, x: &[f64]) -> Result<Array2<f64>> {
    require_no_batch_norm(net, "the input Jacobian")?;
    if x.len() != net.input_dim() {
        return Err(shape_err(format!(
            "input has length {} but the network expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    let xv = ArrayView1::from(x);
    let mut h = xv.to_owned();
    let mut jac = Array2::<f64>::eye(x.len());
    for layer in net.layers() {
        let p = layer.input_branch(xv);
        let u = layer.pre_product(h.view());
        let mut next = layer.w().dot(&jac);
        for (mut row, &pi) in next.axis_iter_mut(Axis(0)).zip(&p) {
            row *= pi;
        }
        let mut v_term = layer.v().clone();
        for (mut row, &ui) in v_term.axis_iter_mut(Axis(0)).zip(&u) {
            row *= ui;
        }
        jac = next + v_term;
        h = u * p;
    }
    Ok(jac)
}
