//! Finite-difference oracle for batch losses and parameter gradients.

use super::*;
use lpnn::network::{Head, LadderNetwork};
use lpnn::train::{batch_loss_and_grad, dropout_mask, flatten_params, unflatten_params, BnUse, LossKind, Target};
use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone)]
pub enum Label {
    Values(Vec<f64>),
    Class(usize),
}

pub fn oracle_loss(pred: &[f64], label: &Label, kind: LossKind) -> f64 {
    match (kind, label) {
        (LossKind::Mse, Label::Values(y)) => {
            pred.iter().zip(y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64
        }
        (LossKind::Logistic, Label::Class(c)) => {
            let z = pred[0];
            (1.0 + z.exp()).ln() - *c as f64 * z
        }
        (LossKind::SoftmaxCe, Label::Class(c)) => {
            let m = pred.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            m + pred.iter().map(|z| (z - m).exp()).sum::<f64>().ln() - pred[*c]
        }
        _ => unreachable!(),
    }
}

/// Mean batch loss with batch statistics for batch norm (population std)
/// and multiplicative masks after each hidden layer.
pub fn oracle_batch_loss(
    net: &LadderNetwork,
    xs: &[Vec<f64>],
    labels: &[Label],
    kind: LossKind,
    batch_bn: bool,
    masks: Option<&[Array2<f64>]>,
) -> f64 {
    let layers = plain_layers(net);
    let bn = plain_bn(net);
    let n = xs.len();
    let mut hs: Vec<Vec<f64>> = xs.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        hs = hs.iter().zip(xs).map(|(h, x)| naive_layer(layer, h, x)).collect();
        if l + 1 == layers.len() {
            break;
        }
        if let Some(bn) = &bn {
            let p = &bn[l];
            for i in 0..hs[0].len() {
                let (mu, sd) = if batch_bn {
                    let mu = hs.iter().map(|h| h[i]).sum::<f64>() / n as f64;
                    let var = hs.iter().map(|h| (h[i] - mu).powi(2)).sum::<f64>() / n as f64;
                    (mu, var.sqrt())
                } else {
                    (p.mu[i], p.sigma[i])
                };
                for h in hs.iter_mut() {
                    h[i] = p.gamma[i] * (h[i] - mu) / (sd + p.eps) + p.beta[i];
                }
            }
        }
        if let Some(m) = masks {
            for (r, h) in hs.iter_mut().enumerate() {
                for (i, v) in h.iter_mut().enumerate() {
                    *v *= m[l][[r, i]];
                }
            }
        }
    }
    hs.iter().zip(labels).map(|(p, y)| oracle_loss(p, y, kind)).sum::<f64>() / n as f64
}

pub fn random_labels(rng: &mut ChaCha8Rng, n: usize, head: Head, out: usize) -> Vec<Label> {
    (0..n)
        .map(|_| match head {
            Head::BinaryLogit => Label::Class(rng.random_range(0..2)),
            Head::KClassLogits => Label::Class(rng.random_range(0..out)),
            _ => Label::Values(random_vec(rng, out, 1.0)),
        })
        .collect()
}

pub fn as_targets(labels: &[Label]) -> Vec<Target<'_>> {
    labels
        .iter()
        .map(|l| match l {
            Label::Values(v) => Target::Values(v),
            Label::Class(c) => Target::Class(*c),
        })
        .collect()
}

pub struct Case {
    net: LadderNetwork,
    xs: Vec<Vec<f64>>,
    labels: Vec<Label>,
    kind: LossKind,
    bn_use: BnUse,
    masks: Option<Vec<Array2<f64>>>,
}

/// Worst relative error between the analytic gradient and five-point
/// central differences of the oracle loss.
pub fn check_case(case: &Case) -> f64 {
    let n = case.xs.len();
    let d0 = case.net.input_dim();
    let xs = Array2::from_shape_fn((n, d0), |(i, j)| case.xs[i][j]);
    let targets = as_targets(&case.labels);
    let batch_bn = case.bn_use == BnUse::Batch;
    let result = batch_loss_and_grad(
        &case.net,
        xs.view(),
        &targets,
        case.kind,
        case.bn_use,
        case.masks.as_deref(),
    )
    .unwrap();
    let oracle = oracle_batch_loss(
        &case.net,
        &case.xs,
        &case.labels,
        case.kind,
        batch_bn,
        case.masks.as_deref(),
    );
    assert!(
        rel_err(result.loss, oracle, 1e-12) < 1e-12,
        "loss {} vs oracle {oracle}",
        result.loss
    );

    let analytic = result.grads.to_flat();
    let params = flatten_params(&case.net);
    assert_eq!(analytic.len(), params.len());
    let mut worst: f64 = 0.0;
    for k in 0..params.len() {
        let f = |t: f64| {
            let mut p = params.clone();
            p[k] = t;
            let net = unflatten_params(&case.net, &p).unwrap();
            oracle_batch_loss(&net, &case.xs, &case.labels, case.kind, batch_bn, case.masks.as_deref())
        };
        // Roundoff grows like eps * loss / h, so the step stays large and
        // the extrapolated stencil handles truncation.
        let h = 1e-3 * params[k].abs().max(1.0);
        let fd = richardson_diff(f, params[k], h);
        worst = worst.max(rel_err(analytic[k], fd, 1e-6));
    }
    worst
}

pub fn make_case(rng: &mut ChaCha8Rng, head: Head, bn: Option<BnUse>, dropout: bool) -> Case {
    let out = match head {
        Head::BinaryLogit | Head::ScalarRegression => 1,
        _ => rng
            .random_range(1..=3)
            .max(if head == Head::KClassLogits { 2 } else { 1 }),
    };
    let (d0, widths) = random_shape(rng, 4, 8, out);
    let widths = if bn.is_some() && widths.len() == 1 {
        vec![3, out]
    } else {
        widths
    };
    let intercept = rng.random_bool(0.5);
    let mut net = random_net(rng, d0, &widths, intercept, head);
    if bn.is_some() {
        let params = random_bn(rng, &net);
        net = net.with_batch_norm(params).unwrap();
    }
    let n = rng.random_range(2..=5);
    let xs = (0..n).map(|_| random_vec(rng, d0, 1.0)).collect();
    let labels = random_labels(rng, n, head, out);
    let masks = dropout.then(|| {
        net.layers()[..net.depth() - 1]
            .iter()
            .map(|l| dropout_mask(n, l.width(), 0.3, rng))
            .collect()
    });
    let kind = lpnn::train::loss_kind_for(head);
    Case {
        net,
        xs,
        labels,
        kind,
        bn_use: bn.unwrap_or(BnUse::Frozen),
        masks,
    }
}
