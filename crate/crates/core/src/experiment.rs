//! One-hidden-layer feedforward baseline and the product-approximation grid.
//!
//! The baseline is an ordinary network `y = w2ᵀ act(W1 x + b1) + b2`, not a
//! ladder network; it measures how hard the product `4 x1 x2` is for a
//! conventional activation compared with a ReLU ramp.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LpnnError, Result};
use crate::train::{optimizer_step, OptimizerKind, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - z.tanh().powi(2),
            Activation::Relu => f64::from(u8::from(z > 0.0)),
        }
    }
}

/// One-hidden-layer scalar-output network. Parameters are kept flat as
/// `[W1 (row-major), b1, w2, b2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    input_dim: usize,
    hidden: usize,
    activation: Activation,
    params: Vec<f64>,
}

impl FeedForward {
    /// `W1 ~ N(0, 1/d)`, `w2 ~ N(0, 1/h)`, zero biases.
    pub fn init<R: Rng>(input_dim: usize, hidden: usize, activation: Activation, rng: &mut R) -> Self {
        let n1 = Normal::new(0.0, (1.0 / input_dim as f64).sqrt()).expect("finite std");
        let n2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("finite std");
        let mut params = Vec::with_capacity(hidden * (input_dim + 2) + 1);
        params.extend((0..hidden * input_dim).map(|_| n1.sample(rng)));
        params.extend(std::iter::repeat_n(0.0, hidden));
        params.extend((0..hidden).map(|_| n2.sample(rng)));
        params.push(0.0);
        Self {
            input_dim,
            hidden,
            activation,
            params,
        }
    }

    pub fn hidden(&self) -> usize {
        self.hidden
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let b1 = self.hidden * self.input_dim;
        (b1, b1 + self.hidden, b1 + 2 * self.hidden)
    }

    fn pre_activation(&self, x: ArrayView1<f64>, k: usize) -> f64 {
        let (b1, _, _) = self.offsets();
        let row = &self.params[k * self.input_dim..(k + 1) * self.input_dim];
        row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.params[b1 + k]
    }

    pub fn predict_one(&self, x: ArrayView1<f64>) -> f64 {
        let (_, w2, b2) = self.offsets();
        (0..self.hidden)
            .map(|k| self.params[w2 + k] * self.activation.apply(self.pre_activation(x, k)))
            .sum::<f64>()
            + self.params[b2]
    }

    pub fn predict(&self, xs: ArrayView2<f64>) -> Array1<f64> {
        xs.rows().into_iter().map(|x| self.predict_one(x)).collect()
    }

    /// Mean squared error over the rows in `idx` and its gradient.
    pub fn mse_and_grad(&self, xs: ArrayView2<f64>, ys: ArrayView1<f64>, idx: &[usize]) -> (f64, Vec<f64>) {
        let (b1, w2, b2) = self.offsets();
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let scale = 2.0 / idx.len() as f64;
        let mut z = vec![0.0; self.hidden];
        for &i in idx {
            let x = xs.row(i);
            let mut pred = self.params[b2];
            for (k, zk) in z.iter_mut().enumerate() {
                *zk = self.pre_activation(x, k);
                pred += self.params[w2 + k] * self.activation.apply(*zk);
            }
            let r = pred - ys[i];
            loss += r * r;
            let dr = scale * r;
            grad[b2] += dr;
            for (k, &zk) in z.iter().enumerate() {
                grad[w2 + k] += dr * self.activation.apply(zk);
                let dz = dr * self.params[w2 + k] * self.activation.derivative(zk);
                grad[b1 + k] += dz;
                for (j, &xj) in x.iter().enumerate() {
                    grad[k * self.input_dim + j] += dz * xj;
                }
            }
        }
        (loss / idx.len() as f64, grad)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// `None` trains on the full batch.
    pub batch_size: Option<usize>,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 200,
            batch_size: Some(32),
        }
    }
}

/// Adam on the mean squared error; minibatches are reshuffled every epoch.
pub fn train_feedforward(
    mut net: FeedForward,
    xs: ArrayView2<f64>,
    ys: ArrayView1<f64>,
    config: &BaselineConfig,
    rng: &mut ChaCha8Rng,
) -> Result<FeedForward> {
    if xs.nrows() != ys.len() || xs.nrows() == 0 {
        return Err(LpnnError::Shape(format!(
            "{} rows but {} targets",
            xs.nrows(),
            ys.len()
        )));
    }
    let n = xs.nrows();
    let batch = config.batch_size.unwrap_or(n).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    let mut state = OptimizerState::new(net.params.len());
    let decay = vec![false; net.params.len()];
    for _ in 0..config.epochs {
        if batch < n {
            order.shuffle(rng);
        }
        for chunk in order.chunks(batch) {
            let (loss, grad) = net.mse_and_grad(xs, ys, chunk);
            if !loss.is_finite() {
                return Err(LpnnError::Numeric("baseline loss became non-finite".into()));
            }
            optimizer_step(
                &mut net.params,
                &grad,
                &mut state,
                OptimizerKind::Adam,
                config.learning_rate,
                0.0,
                &decay,
            );
        }
    }
    Ok(net)
}

pub fn rmse(pred: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
    let diff = &pred - &y;
    (diff.mapv(|e| e * e).sum() / diff.len() as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductTarget {
    /// `4 x1 x2`, whose mean absolute value on the square is 1.
    Product,
    /// `relu(0.5 x1 + 1.5 x2) / C`, with `C` the mean of the ramp over the training sample.
    Relu,
}

impl ProductTarget {
    fn name(self) -> &'static str {
        match self {
            ProductTarget::Product => "product",
            ProductTarget::Relu => "relu",
        }
    }
}

/// Uniform samples on `[-1, 1]^2`.
pub fn sample_square(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, 2), || rng.random_range(-1.0..=1.0))
}

pub fn product_target(xs: ArrayView2<f64>) -> Array1<f64> {
    xs.map_axis(Axis(1), |x| 4.0 * x[0] * x[1])
}

pub fn relu_ramp(xs: ArrayView2<f64>) -> Array1<f64> {
    xs.map_axis(Axis(1), |x| (0.5 * x[0] + 1.5 * x[1]).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProductApproxConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub runs: usize,
    pub hidden_units: Vec<usize>,
    pub activation: Activation,
    pub training: BaselineConfig,
    pub seed: u64,
}

impl Default for ProductApproxConfig {
    fn default() -> Self {
        Self {
            n_train: 1000,
            n_test: 1000,
            runs: 10,
            hidden_units: vec![1, 2, 3, 4],
            activation: Activation::Tanh,
            training: BaselineConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductApproxCell {
    pub target: ProductTarget,
    pub hidden_units: usize,
    pub rmse: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation over runs.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductApproxReport {
    pub config: ProductApproxConfig,
    pub cells: Vec<ProductApproxCell>,
}

impl ProductApproxReport {
    pub fn cell(&self, target: ProductTarget, hidden: usize) -> Option<&ProductApproxCell> {
        self.cells
            .iter()
            .find(|c| c.target == target && c.hidden_units == hidden)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("target,hidden_units,mean_rmse,std_rmse,runs\n");
        for c in &self.cells {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{}\n",
                c.target.name(),
                c.hidden_units,
                c.mean,
                c.std,
                c.rmse.len()
            ));
        }
        out
    }
}

fn run_seed(base: u64, target: ProductTarget, hidden: usize, run: usize) -> u64 {
    let t = match target {
        ProductTarget::Product => 0u64,
        ProductTarget::Relu => 1,
    };
    base.wrapping_mul(1_000_003)
        .wrapping_add(t * 1_000_000 + hidden as u64 * 1000 + run as u64)
}

/// Test RMSE of one seeded run; data, initialization and batching all come
/// from the run seed.
pub fn product_approx_run(
    config: &ProductApproxConfig,
    target: ProductTarget,
    hidden: usize,
    run: usize,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(config.seed, target, hidden, run));
    let x_train = sample_square(config.n_train, &mut rng);
    let x_test = sample_square(config.n_test, &mut rng);
    let (y_train, y_test) = match target {
        ProductTarget::Product => (product_target(x_train.view()), product_target(x_test.view())),
        ProductTarget::Relu => {
            let r_train = relu_ramp(x_train.view());
            let c = r_train.mean().expect("non-empty");
            (r_train / c, relu_ramp(x_test.view()) / c)
        }
    };
    let net = FeedForward::init(2, hidden, config.activation, &mut rng);
    let net = train_feedforward(net, x_train.view(), y_train.view(), &config.training, &mut rng)?;
    Ok(rmse(net.predict(x_test.view()).view(), y_test.view()))
}

/// Every (target, hidden units) cell aggregated over `runs` seeded runs.
pub fn product_approx(config: &ProductApproxConfig) -> Result<ProductApproxReport> {
    if config.runs == 0 || config.n_train == 0 || config.n_test == 0 || config.hidden_units.contains(&0) {
        return Err(LpnnError::Config(
            "runs, sample sizes and hidden units must be positive".into(),
        ));
    }
    let mut cells = Vec::new();
    for target in [ProductTarget::Product, ProductTarget::Relu] {
        for &hidden in &config.hidden_units {
            let rmse = (0..config.runs)
                .into_par_iter()
                .map(|run| product_approx_run(config, target, hidden, run))
                .collect::<Result<Vec<f64>>>()?;
            let mean = rmse.iter().sum::<f64>() / rmse.len() as f64;
            let std = if rmse.len() > 1 {
                (rmse.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (rmse.len() - 1) as f64).sqrt()
            } else {
                0.0
            };
            cells.push(ProductApproxCell {
                target,
                hidden_units: hidden,
                rmse,
                mean,
                std,
            });
        }
    }
    Ok(ProductApproxReport {
        config: config.clone(),
        cells,
    })
}
