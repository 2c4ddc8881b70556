//! Exact backpropagation through product activations, batch norm and dropout.
//!
//! For `h = u ⊙ p` with `u = W a + b` and `p = V x`, the backward pass is
//! `du = dh ⊙ p`, `dp = dh ⊙ u`, `dW = duᵀ a`, `db = Σ du`, `dV = dpᵀ x`,
//! `da = du W`.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::batchnorm::{batch_stats, normalize_rows};
use super::loss::{loss_and_grad, LossKind, Target};
use crate::error::{shape_err, LpnnError, Result};
use crate::network::LadderNetwork;

/// How batch norm layers are evaluated inside a gradient computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnUse {
    /// Normalize with the statistics of the current batch.
    Batch,
    /// Use the stored running statistics.
    Frozen,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrad {
    pub w: Array2<f64>,
    pub v: Array2<f64>,
    pub b: Option<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BnGrad {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

/// `∂loss/∂θ` for every trainable parameter, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGrad>,
    pub bn: Vec<BnGrad>,
}

impl Gradients {
    /// Flattens in the same order as [`flatten_params`].
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.layers {
            out.extend(g.w.iter());
            out.extend(g.v.iter());
            if let Some(b) = &g.b {
                out.extend(b.iter());
            }
        }
        for g in &self.bn {
            out.extend(g.gamma.iter());
            out.extend(g.beta.iter());
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.to_flat().iter().fold(0.0, |a, b| a.max(b.abs()))
    }
}

/// Flattens all trainable parameters: per layer `W`, `V`, `b` (row-major),
/// then per batch-norm layer `gamma`, `beta`.
pub fn flatten_params(net: &LadderNetwork) -> Vec<f64> {
    let mut out = Vec::new();
    for layer in net.layers() {
        out.extend(layer.w().iter());
        out.extend(layer.v().iter());
        if let Some(b) = layer.b() {
            out.extend(b.iter());
        }
    }
    for p in net.batch_norm().into_iter().flatten() {
        out.extend(p.gamma.iter());
        out.extend(p.beta.iter());
    }
    out
}

/// Mask marking which flat parameters receive L2 weight decay (`W` and `V` entries).
pub fn decay_mask(net: &LadderNetwork) -> Vec<bool> {
    let mut out = Vec::new();
    for layer in net.layers() {
        out.extend(std::iter::repeat_n(true, layer.w().len() + layer.v().len()));
        if let Some(b) = layer.b() {
            out.extend(std::iter::repeat_n(false, b.len()));
        }
    }
    for p in net.batch_norm().into_iter().flatten() {
        out.extend(std::iter::repeat_n(false, 2 * p.len()));
    }
    out
}

/// Writes flat parameters back into a copy of `net`.
pub fn unflatten_params(net: &LadderNetwork, flat: &[f64]) -> Result<LadderNetwork> {
    let expected = flatten_params(net).len();
    if flat.len() != expected {
        return Err(shape_err(format!("expected {expected} parameters, got {}", flat.len())));
    }
    let mut out = net.clone();
    let mut it = flat.iter().copied();
    let mut fill = |dst: &mut dyn Iterator<Item = &mut f64>| {
        for d in dst {
            *d = it.next().expect("length checked above");
        }
    };
    for layer in out.layers_mut() {
        fill(&mut layer.w_mut().iter_mut());
        fill(&mut layer.v_mut().iter_mut());
        if let Some(b) = layer.b_mut() {
            fill(&mut b.iter_mut());
        }
    }
    if let Some(bn) = out.batch_norm_mut() {
        for p in bn {
            fill(&mut p.gamma.iter_mut());
            fill(&mut p.beta.iter_mut());
        }
    }
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(LpnnError::NonFinite("parameters after update".into()));
    }
    Ok(out)
}

/// Result of a batch gradient evaluation.
#[derive(Debug, Clone)]
pub struct BatchGradient {
    /// Mean loss over the batch.
    pub loss: f64,
    pub grads: Gradients,
    /// Per hidden layer `(mean, std)` of the batch when [`BnUse::Batch`] was used.
    pub batch_stats: Vec<(Array1<f64>, Array1<f64>)>,
}

struct BnCache {
    z: Array2<f64>,
    s: Array1<f64>,
    sigma: Option<Array1<f64>>,
}

/// Mean loss over a batch and its exact gradient.
///
/// `masks`, when given, holds one multiplicative dropout mask per hidden
/// layer (`n × d_ℓ`), applied after batch norm.
pub fn batch_loss_and_grad(
    net: &LadderNetwork,
    xs: ArrayView2<f64>,
    targets: &[Target],
    kind: LossKind,
    bn_use: BnUse,
    masks: Option<&[Array2<f64>]>,
) -> Result<BatchGradient> {
    let n = xs.nrows();
    let depth = net.depth();
    if n == 0 || targets.len() != n {
        return Err(shape_err(format!("batch has {n} rows and {} targets", targets.len())));
    }
    if xs.ncols() != net.input_dim() {
        return Err(shape_err(format!(
            "batch has {} columns but the network expects {}",
            xs.ncols(),
            net.input_dim()
        )));
    }
    if let Some(m) = masks {
        if m.len() + 1 != depth {
            return Err(shape_err("need one dropout mask per hidden layer"));
        }
    }
    let bn = net.batch_norm();
    if bn_use == BnUse::Batch && bn.is_some() && n < 2 {
        return Err(LpnnError::Config(
            "batch-norm training needs a batch of at least 2".into(),
        ));
    }

    let mut inputs: Vec<Array2<f64>> = Vec::with_capacity(depth);
    let mut us = Vec::with_capacity(depth);
    let mut ps = Vec::with_capacity(depth);
    let mut bn_cache: Vec<Option<BnCache>> = Vec::with_capacity(depth);
    let mut stats = Vec::new();
    let mut a = xs.to_owned();
    for (l, layer) in net.layers().iter().enumerate() {
        let mut u = a.dot(&layer.w().t());
        if let Some(b) = layer.b() {
            u += b;
        }
        let p = xs.dot(&layer.v().t());
        let h = &u * &p;
        inputs.push(a);
        us.push(u);
        ps.push(p);
        if l + 1 == depth {
            a = h;
            bn_cache.push(None);
            break;
        }
        let mut y = h;
        let mut cache = None;
        if let Some(params) = bn.map(|b| &b[l]) {
            let (mu, s, sigma) = match bn_use {
                BnUse::Batch => {
                    let (mu, sigma) = batch_stats(y.view());
                    stats.push((mu.clone(), sigma.clone()));
                    (mu, &sigma + params.eps, Some(sigma))
                }
                BnUse::Frozen => (params.mu.clone(), &params.sigma + params.eps, None),
            };
            let z = normalize_rows(y.view(), &mu, &s);
            y = &z * &params.gamma + &params.beta;
            cache = Some(BnCache { z, s, sigma });
        }
        bn_cache.push(cache);
        if let Some(m) = masks {
            if m[l].dim() != y.dim() {
                return Err(shape_err(format!("dropout mask {} has wrong shape", l + 1)));
            }
            y *= &m[l];
        }
        a = y;
    }

    let out = a;
    let mut total = 0.0;
    let mut d_h = Array2::zeros(out.dim());
    for (i, (row, target)) in out.axis_iter(Axis(0)).zip(targets).enumerate() {
        let (value, g) = loss_and_grad(row, *target, kind)?;
        total += value;
        d_h.row_mut(i).assign(&(g / n as f64));
    }
    if !total.is_finite() {
        return Err(LpnnError::NonFinite("loss".into()));
    }

    let mut layer_grads = Vec::with_capacity(depth);
    let mut bn_grads = Vec::new();
    for l in (0..depth).rev() {
        let layer = &net.layers()[l];
        let d_u = &d_h * &ps[l];
        let d_p = &d_h * &us[l];
        layer_grads.push(LayerGrad {
            w: d_u.t().dot(&inputs[l]),
            v: d_p.t().dot(&xs),
            b: layer.b().map(|_| d_u.sum_axis(Axis(0))),
        });
        if l == 0 {
            break;
        }
        // Back through the post-processing of layer l - 1.
        let mut d_y = d_u.dot(layer.w());
        if let Some(m) = masks {
            d_y *= &m[l - 1];
        }
        d_h = match (&bn_cache[l - 1], bn) {
            (Some(cache), Some(params)) => {
                let params = &params[l - 1];
                bn_grads.push(BnGrad {
                    gamma: (&d_y * &cache.z).sum_axis(Axis(0)),
                    beta: d_y.sum_axis(Axis(0)),
                });
                let d_z = d_y * &params.gamma;
                match &cache.sigma {
                    None => d_z / &cache.s,
                    Some(sigma) => bn_batch_backward(&d_z, &cache.z, &cache.s, sigma),
                }
            }
            _ => d_y,
        };
    }
    layer_grads.reverse();
    bn_grads.reverse();
    Ok(BatchGradient {
        loss: total / n as f64,
        grads: Gradients {
            layers: layer_grads,
            bn: bn_grads,
        },
        batch_stats: stats,
    })
}

/// Gradient through `z = (h - mean(h)) / (std(h) + eps)` with batch statistics:
/// `dh = (dz - mean(dz)) / s - z * mean(dz ⊙ z) / sigma`.
fn bn_batch_backward(d_z: &Array2<f64>, z: &Array2<f64>, s: &Array1<f64>, sigma: &Array1<f64>) -> Array2<f64> {
    let n = d_z.nrows() as f64;
    let mean_dz = d_z.sum_axis(Axis(0)) / n;
    let mean_dz_z = (d_z * z).sum_axis(Axis(0)) / n;
    let mut d_h = d_z - &mean_dz;
    for mut row in d_h.axis_iter_mut(Axis(0)) {
        row.zip_mut_with(s, |v, &s| *v = if s == 0.0 { 0.0 } else { *v / s });
    }
    let mut corr = z * &mean_dz_z;
    for mut row in corr.axis_iter_mut(Axis(0)) {
        row.zip_mut_with(sigma, |v, &sg| *v = if sg == 0.0 { 0.0 } else { *v / sg });
    }
    d_h - corr
}

/// Single-sample gradient with frozen batch norm and no dropout.
pub fn grad_params(net: &LadderNetwork, x: &[f64], target: Target, kind: LossKind) -> Result<Gradients> {
    let xs = ArrayView2::from_shape((1, x.len()), x).map_err(|e| shape_err(e.to_string()))?;
    Ok(batch_loss_and_grad(net, xs, &[target], kind, BnUse::Frozen, None)?.grads)
}
