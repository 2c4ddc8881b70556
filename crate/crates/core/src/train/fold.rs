use super::batchnorm::BatchNormParams;
use crate::error::{shape_err, LpnnError, Result};
use crate::network::{LadderLayer, LadderNetwork};

/// Merges a frozen batch-norm layer into the `W` branch of the layer that consumes it.
///
/// With `s = gamma / (sigma + eps)` the folded layer has
/// `W = W' diag(s)` and `b = W' (beta - s ⊙ mu) + b'`.
pub fn fold_bn(next_layer: &LadderLayer, bn: &BatchNormParams) -> Result<LadderLayer> {
    if !bn.frozen {
        return Err(LpnnError::State(
            "cannot fold batch norm with unfrozen statistics".into(),
        ));
    }
    if next_layer.fan_in() != bn.len() {
        return Err(shape_err(format!(
            "layer consumes {} units but batch norm has width {}",
            next_layer.fan_in(),
            bn.len()
        )));
    }
    let scale = bn.frozen_scale();
    let w = next_layer.w() * &scale;
    let shift = &bn.beta - &(&scale * &bn.mu);
    let mut b = next_layer.w().dot(&shift);
    if let Some(prev) = next_layer.b() {
        b += prev;
    }
    LadderLayer::new(w, next_layer.v().clone(), Some(b))
}

/// Folds every batch-norm layer, returning a pure polynomial network.
pub fn fold_network(net: &LadderNetwork) -> Result<LadderNetwork> {
    let Some(bn) = net.batch_norm() else {
        return Ok(net.clone());
    };
    let mut layers = net.layers().to_vec();
    for (l, params) in bn.iter().enumerate() {
        layers[l + 1] = fold_bn(&layers[l + 1], params)?;
    }
    LadderNetwork::new(layers, net.head())?.with_dropout(net.dropout_rate())
}

/// Removes intercepts that are exactly zero, so an affine-free folded net
/// counts as intercept-free.
pub fn strip_zero_intercepts(net: &LadderNetwork) -> Result<LadderNetwork> {
    let layers = net
        .layers()
        .iter()
        .map(|l| {
            let b = l.b().filter(|b| b.iter().any(|&v| v != 0.0)).cloned();
            LadderLayer::new(l.w().clone(), l.v().clone(), b)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = LadderNetwork::new(layers, net.head())?;
    if let Some(bn) = net.batch_norm() {
        out = out.with_batch_norm(bn.to_vec())?;
    }
    out.with_dropout(net.dropout_rate())
}
