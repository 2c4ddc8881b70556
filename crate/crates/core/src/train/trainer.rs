use std::fmt::Write as _;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backprop::{batch_loss_and_grad, decay_mask, flatten_params, unflatten_params, BnUse};
use super::batchnorm::BatchNormParams;
use super::dropout::dropout_mask;
use super::loss::{loss_and_grad, LossKind, Target};
use super::optim::{optimizer_step, OptimizerKind, OptimizerState};
use crate::error::{shape_err, LpnnError, Result};
use crate::network::{Head, LadderNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub l2_weight: f64,
    pub dropout_rate: f64,
    pub bn_enabled: bool,
    pub seed: u64,
    pub bn_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            epochs: 200,
            batch_size: 32,
            l2_weight: 0.0,
            dropout_rate: 0.0,
            bn_enabled: false,
            seed: 0,
            bn_momentum: 0.9,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LpnnError::Config(format!(
                "learning_rate must be > 0, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(LpnnError::Config(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.l2_weight >= 0.0) {
            return Err(LpnnError::Config(format!(
                "l2_weight must be >= 0, got {}",
                self.l2_weight
            )));
        }
        if self.batch_size == 0 {
            return Err(LpnnError::Config("batch_size must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.bn_momentum) {
            return Err(LpnnError::Config(format!(
                "bn_momentum must be in [0, 1], got {}",
                self.bn_momentum
            )));
        }
        Ok(())
    }
}

/// Targets for a set of samples.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetSet {
    /// `n × d_L` regression targets.
    Values(Array2<f64>),
    /// Class indices (`0/1` for binary heads).
    Classes(Vec<usize>),
}

impl TargetSet {
    pub fn len(&self) -> usize {
        match self {
            TargetSet::Values(v) => v.nrows(),
            TargetSet::Classes(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> Target<'_> {
        match self {
            TargetSet::Values(v) => Target::Values(v.row(i).to_slice().expect("targets are stored in standard layout")),
            TargetSet::Classes(c) => Target::Class(c[i]),
        }
    }
}

/// Features and targets used for training or evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainData {
    pub xs: Array2<f64>,
    pub targets: TargetSet,
}

impl TrainData {
    pub fn new(xs: Array2<f64>, targets: TargetSet) -> Result<Self> {
        if xs.nrows() != targets.len() {
            return Err(shape_err(format!("{} rows but {} targets", xs.nrows(), targets.len())));
        }
        let targets = match targets {
            TargetSet::Values(v) => TargetSet::Values(v.as_standard_layout().into_owned()),
            other => other,
        };
        Ok(Self {
            xs: xs.as_standard_layout().into_owned(),
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.xs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.nrows() == 0
    }
}

pub fn loss_kind_for(head: Head) -> LossKind {
    match head {
        Head::Raw | Head::ScalarRegression => LossKind::Mse,
        Head::BinaryLogit => LossKind::Logistic,
        Head::KClassLogits => LossKind::SoftmaxCe,
    }
}

/// Mean per-sample loss in inference mode.
pub fn evaluate_loss(net: &LadderNetwork, data: &TrainData) -> Result<f64> {
    let kind = loss_kind_for(net.head());
    let out = net.forward_batch(data.xs.view())?;
    let mut total = 0.0;
    for (i, row) in out.axis_iter(Axis(0)).enumerate() {
        total += loss_and_grad(row, data.targets.get(i), kind)?.0;
    }
    Ok(total / data.len() as f64)
}

/// Task metric: RMSE over all outputs for regression, error rate for classification.
pub fn evaluate_metric(net: &LadderNetwork, data: &TrainData) -> Result<f64> {
    let out = net.forward_batch(data.xs.view())?;
    match &data.targets {
        TargetSet::Values(y) => {
            let diff = &out - y;
            Ok((diff.mapv(|e| e * e).sum() / diff.len() as f64).sqrt())
        }
        TargetSet::Classes(c) => {
            let wrong = out
                .axis_iter(Axis(0))
                .zip(c)
                .filter(|(row, &label)| predict_class(*row, net.head()) != label)
                .count();
            Ok(wrong as f64 / c.len() as f64)
        }
    }
}

pub fn predict_class(out: ArrayView1<f64>, head: Head) -> usize {
    match head {
        Head::BinaryLogit => usize::from(out[0] > 0.0),
        _ => {
            out.iter()
                .enumerate()
                .fold(
                    (0, f64::NEG_INFINITY),
                    |best, (i, &v)| if v > best.1 { (i, v) } else { best },
                )
                .0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

/// Per-epoch losses; epoch 0 is the initial network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossHistory {
    pub epochs: Vec<EpochLoss>,
}

impl LossHistory {
    /// CSV with header `epoch,train_loss,val_loss`; missing validation loss is empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| format!("{v:.17e}")).unwrap_or_default();
            let _ = writeln!(s, "{},{:.17e},{}", e.epoch, e.train_loss, val);
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: LadderNetwork,
    pub history: LossHistory,
}

/// Minibatch training. Deterministic for a fixed `config.seed`.
pub fn train_model(
    net: &LadderNetwork,
    train: &TrainData,
    val: Option<&TrainData>,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(LpnnError::Data("training set is empty".into()));
    }
    if config.epochs == 0 {
        let history = LossHistory {
            epochs: vec![EpochLoss {
                epoch: 0,
                train_loss: evaluate_loss(net, train)?,
                val_loss: val.map(|v| evaluate_loss(net, v)).transpose()?,
            }],
        };
        return Ok(TrainOutcome {
            net: net.clone(),
            history,
        });
    }
    let mut net = net.clone().with_dropout(config.dropout_rate)?;
    if config.bn_enabled && net.batch_norm().is_none() && net.depth() > 1 {
        let bn = net.layers()[..net.depth() - 1]
            .iter()
            .map(|l| BatchNormParams::identity(l.width()))
            .collect();
        net = net.with_batch_norm(bn)?;
    }
    let bn_use = if config.bn_enabled && net.batch_norm().is_some() {
        BnUse::Batch
    } else {
        BnUse::Frozen
    };
    let kind = loss_kind_for(net.head());
    let decay = decay_mask(&net);
    let mut params = flatten_params(&net);
    let mut state = OptimizerState::new(params.len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut history = LossHistory::default();
    history.epochs.push(EpochLoss {
        epoch: 0,
        train_loss: evaluate_loss(&net, train)?,
        val_loss: val.map(|v| evaluate_loss(&net, v)).transpose()?,
    });

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (batch_no, chunk) in order.chunks(config.batch_size).enumerate() {
            if bn_use == BnUse::Batch && chunk.len() < 2 {
                continue;
            }
            let xs = train.xs.select(Axis(0), chunk);
            let targets: Vec<Target> = chunk.iter().map(|&i| train.targets.get(i)).collect();
            let masks = (config.dropout_rate > 0.0).then(|| {
                net.layers()[..net.depth() - 1]
                    .iter()
                    .map(|l| dropout_mask(chunk.len(), l.width(), config.dropout_rate, &mut rng))
                    .collect::<Vec<_>>()
            });
            let result = batch_loss_and_grad(&net, xs.view(), &targets, kind, bn_use, masks.as_deref()).map_err(
                |e| match e {
                    LpnnError::NonFinite(_) => numeric_abort(epoch, batch_no),
                    other => other,
                },
            )?;
            let grads = result.grads.to_flat();
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(numeric_abort(epoch, batch_no));
            }
            optimizer_step(
                &mut params,
                &grads,
                &mut state,
                config.optimizer,
                config.learning_rate,
                config.l2_weight,
                &decay,
            );
            net = unflatten_params(&net, &params).map_err(|_| numeric_abort(epoch, batch_no))?;
            if let Some(bn) = net.batch_norm_mut() {
                let m = config.bn_momentum;
                for (p, (mu, sigma)) in bn.iter_mut().zip(result.batch_stats) {
                    p.mu = &p.mu * m + &mu * (1.0 - m);
                    p.sigma = &p.sigma * m + &sigma * (1.0 - m);
                }
            }
        }
        let train_loss = evaluate_loss(&net, train)?;
        if !train_loss.is_finite() {
            return Err(numeric_abort(epoch, 0));
        }
        history.epochs.push(EpochLoss {
            epoch,
            train_loss,
            val_loss: val.map(|v| evaluate_loss(&net, v)).transpose()?,
        });
    }
    Ok(TrainOutcome { net, history })
}

fn numeric_abort(epoch: usize, batch: usize) -> LpnnError {
    LpnnError::Numeric(format!(
        "loss or gradient became non-finite at epoch {epoch}, batch {batch}; \
         try batch normalization or a smaller learning rate"
    ))
}
