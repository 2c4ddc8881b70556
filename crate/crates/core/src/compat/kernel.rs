use ndarray::{concatenate, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{LpnnError, Result};
use crate::network::{Head, LadderLayer, LadderNetwork};
use crate::serde_rows;

/// `y(x) = Σ_k π_k (λ + p_kᵀ x)^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    #[serde(with = "serde_rows::vector")]
    pub pi: Array1<f64>,
    /// Kernel points, one per row (`K × d`).
    #[serde(with = "serde_rows::matrix")]
    pub p: Array2<f64>,
    pub lambda: f64,
    pub m: u32,
}

impl KernelModel {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(LpnnError::Config("kernel degree m must be at least 1".into()));
        }
        if self.pi.is_empty() || self.pi.len() != self.p.nrows() {
            return Err(LpnnError::Config(format!(
                "need K >= 1 kernel weights matching {} kernel points, got {}",
                self.p.nrows(),
                self.pi.len()
            )));
        }
        if self.p.ncols() == 0 {
            return Err(LpnnError::Config("kernel points need at least one feature".into()));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.p.ncols()
    }

    /// Direct evaluation of the kernel sum.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let x = Array1::from(x.to_vec());
        self.p
            .rows()
            .into_iter()
            .zip(&self.pi)
            .map(|(p, pi)| pi * (self.lambda + p.dot(&x)).powi(self.m as i32))
            .sum()
    }
}

/// Selector row picking the appended constant coordinate of `[x, 1]`.
pub(crate) fn constant_selector(d: usize) -> Array2<f64> {
    let mut e = Array2::zeros((1, d + 1));
    e[[0, d]] = 1.0;
    e
}

/// Ladder network on the augmented input `[x, 1]` computing the kernel sum.
///
/// Every kernel `a_k = [p_k, λ]` runs in its own unit: layer 1 has
/// `W = V = A`, layers `2..m-1` have `W = I_K` and `V = A`, which gives
/// `(a_kᵀ [x, 1])^m` after `m - 1` layers. A last layer with `W = πᵀ` and
/// `V` selecting the constant coordinate forms the weighted sum, so the
/// network has `m` layers and degree `m + 1` in the augmented input.
pub fn from_poly_kernel(model: &KernelModel) -> Result<LadderNetwork> {
    model.validate()?;
    let d = model.input_dim();
    let k = model.pi.len();
    let lambda_col = Array2::from_elem((k, 1), model.lambda);
    let a = concatenate(Axis(1), &[model.p.view(), lambda_col.view()]).expect("row counts match");
    let pi_row = model.pi.view().insert_axis(Axis(0)).to_owned();
    let select_one = constant_selector(d);
    if model.m == 1 {
        let w = pi_row.dot(&a);
        let layer = LadderLayer::new(w, select_one, None)?;
        return LadderNetwork::new(vec![layer], Head::ScalarRegression);
    }
    let mut layers = vec![LadderLayer::new(a.clone(), a.clone(), None)?];
    for _ in 2..model.m {
        layers.push(LadderLayer::new(Array2::eye(k), a.clone(), None)?);
    }
    layers.push(LadderLayer::new(pi_row, select_one, None)?);
    LadderNetwork::new(layers, Head::ScalarRegression)
}
