use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{shape_err, LpnnError, Result};

/// Batch-norm parameters for one hidden layer.
///
/// The normalization is `gamma * (h - mu) / (sigma + eps) + beta`; the
/// divisor is `sigma + eps`, not `sqrt(var + eps)`, so that freezing the
/// statistics gives an affine map that folds exactly into the next layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormParams {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    /// Running mean.
    pub mu: Array1<f64>,
    /// Running standard deviation.
    pub sigma: Array1<f64>,
    pub eps: f64,
    /// Running statistics are frozen (inference mode).
    pub frozen: bool,
}

impl BatchNormParams {
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(gamma: Array1<f64>, beta: Array1<f64>, mu: Array1<f64>, sigma: Array1<f64>, eps: f64) -> Result<Self> {
        let d = gamma.len();
        if beta.len() != d || mu.len() != d || sigma.len() != d {
            return Err(shape_err("batch-norm vectors must have equal length"));
        }
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(LpnnError::Config(format!("batch-norm eps must be >= 0, got {eps}")));
        }
        if sigma.iter().any(|&s| !(s >= 0.0)) {
            return Err(LpnnError::Config("batch-norm sigma must be non-negative".into()));
        }
        let all_finite = gamma
            .iter()
            .chain(&beta)
            .chain(&mu)
            .chain(&sigma)
            .all(|a| a.is_finite());
        if !all_finite {
            return Err(LpnnError::NonFinite("batch-norm parameters".into()));
        }
        Ok(Self {
            gamma,
            beta,
            mu,
            sigma,
            eps,
            frozen: true,
        })
    }

    /// `gamma = 1, beta = 0, mu = 0, sigma = 1` with the default eps.
    pub fn identity(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            mu: Array1::zeros(width),
            sigma: Array1::ones(width),
            eps: Self::DEFAULT_EPS,
            frozen: true,
        }
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    /// Per-unit scale `gamma / (sigma + eps)` of the frozen affine map.
    pub fn frozen_scale(&self) -> Array1<f64> {
        &self.gamma / &(&self.sigma + self.eps)
    }

    pub(crate) fn apply_frozen(&self, h: ArrayView1<f64>) -> Array1<f64> {
        let z = normalize(&h.to_owned(), &self.mu, &(&self.sigma + self.eps));
        &self.gamma * &z + &self.beta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BnMode {
    /// Normalize with batch statistics and update the running statistics by
    /// `running = momentum * running + (1 - momentum) * batch`.
    Train {
        momentum: f64,
    },
    Infer,
}

/// Per-column mean and population standard deviation.
pub(crate) fn batch_stats(h: ArrayView2<f64>) -> (Array1<f64>, Array1<f64>) {
    let n = h.nrows() as f64;
    let mu = h.sum_axis(Axis(0)) / n;
    let centered = &h - &mu;
    let sigma = (centered.mapv(|c| c * c).sum_axis(Axis(0)) / n).mapv(f64::sqrt);
    (mu, sigma)
}

/// `(h - mu) / s`, with zero where the divisor vanishes.
fn normalize(h: &Array1<f64>, mu: &Array1<f64>, s: &Array1<f64>) -> Array1<f64> {
    let mut z = h - mu;
    z.zip_mut_with(s, |z, &s| *z = if s == 0.0 { 0.0 } else { *z / s });
    z
}

pub(crate) fn normalize_rows(h: ArrayView2<f64>, mu: &Array1<f64>, s: &Array1<f64>) -> Array2<f64> {
    let mut z = &h - mu;
    for mut row in z.axis_iter_mut(Axis(0)) {
        row.zip_mut_with(s, |z, &s| *z = if s == 0.0 { 0.0 } else { *z / s });
    }
    z
}

/// Batch normalization of an `n × d` batch of hidden vectors.
pub fn bn_forward(batch_h: ArrayView2<f64>, params: &mut BatchNormParams, mode: BnMode) -> Result<Array2<f64>> {
    if batch_h.ncols() != params.len() {
        return Err(shape_err(format!(
            "batch has {} columns but batch norm has width {}",
            batch_h.ncols(),
            params.len()
        )));
    }
    let (mu, s) = match mode {
        BnMode::Train { momentum } => {
            if batch_h.nrows() < 2 {
                return Err(LpnnError::Config(
                    "batch-norm training needs a batch of at least 2".into(),
                ));
            }
            let (mu, sigma) = batch_stats(batch_h);
            params.mu = &params.mu * momentum + &mu * (1.0 - momentum);
            params.sigma = &params.sigma * momentum + &sigma * (1.0 - momentum);
            (mu, sigma + params.eps)
        }
        BnMode::Infer => (params.mu.clone(), &params.sigma + params.eps),
    };
    let z = normalize_rows(batch_h, &mu, &s);
    Ok(z * &params.gamma + &params.beta)
}
