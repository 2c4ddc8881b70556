//! Output moments of a ladder network under independent Gaussian weights.
//!
//! Because the network is linear in each weight matrix and the layers are
//! independent, the first moment is the forward pass of the mean weights
//! and the raw second moment `Σ^ℓ = E[h^ℓ (h^ℓ)ᵀ]` obeys
//!
//! `Σ^ℓ_ij = (xᵀ E[V_iᵀ V_j] x) · tr(E[W_iᵀ W_j] Σ^{ℓ-1})`, `Σ^0 = x xᵀ`,
//!
//! where for entrywise-independent rows `E[A_iᵀ A_j] = Ā_iᵀ Ā_j + [i = j] diag(var A_i)`.

use libm::erfc;
use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, LpnnError, Result};
use crate::network::{LadderLayer, LadderNetwork};

/// Independent Gaussian prior over every entry of every `W^ℓ` and `V^ℓ`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWeightPrior {
    mean: LadderNetwork,
    w_var: Vec<Array2<f64>>,
    v_var: Vec<Array2<f64>>,
}

impl GaussianWeightPrior {
    pub fn new(mean: LadderNetwork, w_var: Vec<Array2<f64>>, v_var: Vec<Array2<f64>>) -> Result<Self> {
        if !mean.is_intercept_free() {
            return Err(LpnnError::Precondition(
                "weight priors are defined for intercept-free networks without batch norm".into(),
            ));
        }
        if w_var.len() != mean.depth() || v_var.len() != mean.depth() {
            return Err(shape_err("need one variance matrix per layer for W and V"));
        }
        for (l, layer) in mean.layers().iter().enumerate() {
            if w_var[l].dim() != layer.w().dim() || v_var[l].dim() != layer.v().dim() {
                return Err(shape_err(format!(
                    "variance shapes of layer {} do not match its weights",
                    l + 1
                )));
            }
        }
        let valid = w_var
            .iter()
            .chain(&v_var)
            .flat_map(|m| m.iter())
            .all(|&s| s >= 0.0 && s.is_finite());
        if !valid {
            return Err(LpnnError::Config(
                "prior variances must be finite and non-negative".into(),
            ));
        }
        Ok(Self { mean, w_var, v_var })
    }

    /// Same variance `sigma2` for every weight entry.
    pub fn isotropic(mean: LadderNetwork, sigma2: f64) -> Result<Self> {
        let w_var = mean
            .layers()
            .iter()
            .map(|l| Array2::from_elem(l.w().dim(), sigma2))
            .collect();
        let v_var = mean
            .layers()
            .iter()
            .map(|l| Array2::from_elem(l.v().dim(), sigma2))
            .collect();
        Self::new(mean, w_var, v_var)
    }

    pub fn mean(&self) -> &LadderNetwork {
        &self.mean
    }

    pub fn w_var(&self) -> &[Array2<f64>] {
        &self.w_var
    }

    pub fn v_var(&self) -> &[Array2<f64>] {
        &self.v_var
    }

    /// Draws one network from the prior.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> LadderNetwork {
        let draw = |m: &Array2<f64>, var: &Array2<f64>, rng: &mut R| {
            let mut out = m.clone();
            for (o, &s) in out.iter_mut().zip(var) {
                let z: f64 = StandardNormal.sample(rng);
                *o += s.sqrt() * z;
            }
            out
        };
        let layers = self
            .mean
            .layers()
            .iter()
            .zip(self.w_var.iter().zip(&self.v_var))
            .map(|(layer, (wv, vv))| {
                let w = draw(layer.w(), wv, rng);
                let v = draw(layer.v(), vv, rng);
                LadderLayer::new(w, v, None).expect("shapes match the mean network")
            })
            .collect();
        LadderNetwork::new(layers, self.mean.head()).expect("shapes match the mean network")
    }
}

/// First moment, raw second moment and covariance of `h^L`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentResult {
    pub mu: Array1<f64>,
    pub sigma2: Array2<f64>,
    pub cov: Array2<f64>,
}

/// `E[h^L]`: the forward pass of the mean network.
pub fn output_mean(prior: &GaussianWeightPrior, x: &[f64]) -> Result<Array1<f64>> {
    prior.mean.output(x)
}

/// `E[h^L (h^L)ᵀ]`.
pub fn second_moment(prior: &GaussianWeightPrior, x: &[f64]) -> Result<Array2<f64>> {
    if x.len() != prior.mean.input_dim() {
        return Err(shape_err(format!(
            "input has length {} but the network expects {}",
            x.len(),
            prior.mean.input_dim()
        )));
    }
    let xv = ArrayView1::from(x);
    let x_sq = xv.mapv(|v| v * v);
    let mut sigma = outer(xv, xv);
    for (l, layer) in prior.mean.layers().iter().enumerate() {
        let vx = layer.v().dot(&xv);
        let mut input_term = outer(vx.view(), vx.view());
        let v_extra = prior.v_var[l].dot(&x_sq);
        input_term.diag_mut().zip_mut_with(&v_extra, |d, e| *d += e);

        let w = layer.w();
        let mut hidden_term = w.dot(&sigma).dot(&w.t());
        let w_extra = prior.w_var[l].dot(&sigma.diag());
        hidden_term.diag_mut().zip_mut_with(&w_extra, |d, e| *d += e);

        sigma = input_term * hidden_term;
    }
    Ok(sigma)
}

pub fn moments(prior: &GaussianWeightPrior, x: &[f64]) -> Result<MomentResult> {
    let mu = output_mean(prior, x)?;
    let sigma2 = second_moment(prior, x)?;
    let cov = &sigma2 - &outer(mu.view(), mu.view());
    Ok(MomentResult { mu, sigma2, cov })
}

fn outer(a: ArrayView1<f64>, b: ArrayView1<f64>) -> Array2<f64> {
    let a2 = a.insert_axis(Axis(1));
    let b2 = b.insert_axis(Axis(0));
    a2.dot(&b2)
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PredictiveTask {
    Regression { noise_var: f64 },
    Binary,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictive {
    /// `N(mean, cov + noise_var I)`.
    Normal { mean: Array1<f64>, cov: Array2<f64> },
    /// Approximate `P(h^L > 0)`.
    Bernoulli { p: f64 },
}

/// Gaussian predictive distribution from the exact first two moments.
pub fn gaussian_predictive(prior: &GaussianWeightPrior, x: &[f64], task: PredictiveTask) -> Result<Predictive> {
    let m = moments(prior, x)?;
    match task {
        PredictiveTask::Regression { noise_var } => {
            if !(noise_var >= 0.0) {
                return Err(LpnnError::Config(format!(
                    "noise variance must be >= 0, got {noise_var}"
                )));
            }
            let mut cov = m.cov;
            cov.diag_mut().mapv_inplace(|d| d.max(0.0) + noise_var);
            Ok(Predictive::Normal { mean: m.mu, cov })
        }
        PredictiveTask::Binary => {
            if m.mu.len() != 1 {
                return Err(LpnnError::Config(format!(
                    "binary predictive needs a scalar output, network has {}",
                    m.mu.len()
                )));
            }
            let mu = m.mu[0];
            let var = m.cov[[0, 0]].max(0.0);
            let p = if var == 0.0 {
                if mu > 0.0 {
                    1.0
                } else if mu < 0.0 {
                    0.0
                } else {
                    0.5
                }
            } else {
                std_normal_cdf(mu / var.sqrt())
            };
            Ok(Predictive::Bernoulli { p })
        }
    }
}

/// `n` samples of `h^L` (rows) with weights drawn from the prior.
///
/// Sample `i` uses its own ChaCha stream `i` under `seed`, so the output
/// does not depend on how the work is scheduled.
pub fn mc_outputs(prior: &GaussianWeightPrior, x: &[f64], n: usize, seed: u64) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(LpnnError::Config("need at least one Monte-Carlo sample".into()));
    }
    if x.len() != prior.mean.input_dim() {
        return Err(shape_err(format!(
            "input has length {} but the network expects {}",
            x.len(),
            prior.mean.input_dim()
        )));
    }
    let rows: Vec<Array1<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            prior.sample(&mut rng).output(x)
        })
        .collect::<Result<_>>()?;
    let d = prior.mean.output_dim();
    let mut out = Array2::zeros((n, d));
    for (mut dst, row) in out.axis_iter_mut(Axis(0)).zip(rows) {
        dst.assign(&row);
    }
    Ok(out)
}

/// Sample mean, raw second moment and their standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub n: usize,
    pub mean: Array1<f64>,
    pub second: Array2<f64>,
    pub mean_se: Array1<f64>,
    pub second_se: Array2<f64>,
}

pub fn summarize_samples(samples: &Array2<f64>) -> McSummary {
    let n = samples.nrows();
    let nf = n as f64;
    let d = samples.ncols();
    let mean = samples.sum_axis(Axis(0)) / nf;
    let second = samples.t().dot(samples) / nf;
    let mut mean_se = Array1::zeros(d);
    let mut second_se = Array2::zeros((d, d));
    let denom = (nf - 1.0).max(1.0);
    for i in 0..d {
        let ci = samples.column(i);
        let var = ci.iter().map(|v| (v - mean[i]).powi(2)).sum::<f64>() / denom;
        mean_se[i] = (var / nf).sqrt();
        for j in 0..d {
            let cj = samples.column(j);
            let prod = &ci * &cj;
            let m = second[[i, j]];
            let var = prod.iter().map(|v| (v - m).powi(2)).sum::<f64>() / denom;
            second_se[[i, j]] = (var / nf).sqrt();
        }
    }
    McSummary {
        n,
        mean,
        second,
        mean_se,
        second_se,
    }
}

/// Sample variance of a scalar series with the standard error of that variance estimate.
pub fn variance_with_se(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let m2 = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = samples.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (m2, ((m4 - m2 * m2).max(0.0) / n).sqrt())
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `samples` and `N(mean, var)`.
pub fn ks_statistic_normal(samples: &[f64], mean: f64, var: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let sd = var.max(0.0).sqrt();
    if sd == 0.0 {
        // Point mass at `mean`: the gap is the mass on either side of it.
        let below = sorted.iter().filter(|&&v| v < mean).count() as f64 / n;
        let above = sorted.iter().filter(|&&v| v > mean).count() as f64 / n;
        return below.max(above);
    }
    let cdf = |v: f64| std_normal_cdf((v - mean) / sd);
    sorted.iter().enumerate().fold(0.0_f64, |d, (i, &v)| {
        let f = cdf(v);
        d.max(f - i as f64 / n).max((i + 1) as f64 / n - f)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub left: f64,
    pub right: f64,
    pub count: usize,
    /// `N(mean, var)` density at the bin center.
    pub density: f64,
}

/// Equal-width histogram of `samples` plus the Gaussian density at bin centers.
///
/// Identical samples collapse into a single bin.
pub fn histogram_with_density(samples: &[f64], bins: usize, mean: f64, var: f64) -> Vec<HistogramBin> {
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let density = |c: f64| {
        if var <= 0.0 {
            if c == mean {
                f64::INFINITY
            } else {
                0.0
            }
        } else {
            (-(c - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
        }
    };
    if samples.is_empty() {
        return Vec::new();
    }
    if lo == hi || bins <= 1 {
        return vec![HistogramBin {
            left: lo,
            right: hi,
            count: samples.len(),
            density: density(0.5 * (lo + hi)),
        }];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &s in samples {
        let k = (((s - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| {
            let left = lo + k as f64 * width;
            let right = if k + 1 == bins { hi } else { lo + (k + 1) as f64 * width };
            HistogramBin {
                left,
                right,
                count,
                density: density(0.5 * (left + right)),
            }
        })
        .collect()
}
