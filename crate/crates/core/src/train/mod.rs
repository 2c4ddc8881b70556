//! Losses, backpropagation, optimizers, batch norm, dropout and BN folding.

mod backprop;
mod batchnorm;
mod dropout;
mod fold;
mod loss;
mod optim;
mod trainer;

pub use backprop::{
    batch_loss_and_grad, decay_mask, flatten_params, grad_params, unflatten_params, BatchGradient, BnGrad, BnUse,
    Gradients, LayerGrad,
};
pub use batchnorm::{bn_forward, BatchNormParams, BnMode};
pub use dropout::{dropout_apply, dropout_mask};
pub use fold::{fold_bn, fold_network, strip_zero_intercepts};
pub use loss::{loss, loss_and_grad, LossKind, Target};
pub use optim::{optimizer_step, OptimizerKind, OptimizerState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use trainer::{
    evaluate_loss, evaluate_metric, loss_kind_for, predict_class, train_model, EpochLoss, LossHistory, TargetSet,
    TrainConfig, TrainData, TrainOutcome,
};
