use ndarray::{concatenate, s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use super::kernel::constant_selector;
use crate::error::{LpnnError, Result};
use crate::network::{Head, LadderLayer, LadderNetwork};
use crate::serde_rows;

/// Second-order factorization machine `w0 + w1ᵀx + Σ_{i<j} v_iᵀ v_j x_i x_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FM2Model {
    pub w0: f64,
    #[serde(with = "serde_rows::vector")]
    pub w1: Array1<f64>,
    /// Factor vectors `v_i` as rows (`d × r`).
    #[serde(with = "serde_rows::matrix")]
    pub factors: Array2<f64>,
}

impl FM2Model {
    pub fn validate(&self) -> Result<()> {
        if self.factors.ncols() == 0 {
            return Err(LpnnError::Config("factorization rank must be at least 1".into()));
        }
        if self.w1.len() != self.factors.nrows() || self.w1.is_empty() {
            return Err(LpnnError::Config(format!(
                "linear weights have length {} but there are {} factor rows",
                self.w1.len(),
                self.factors.nrows()
            )));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.w1.len()
    }

    /// Direct evaluation.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let d = x.len();
        let mut y = self.w0 + self.w1.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        for i in 0..d {
            for j in i + 1..d {
                y += self.factors.row(i).dot(&self.factors.row(j)) * x[i] * x[j];
            }
        }
        y
    }
}

/// Ladder network on `[x, 1]` computing the factorization machine.
///
/// Layer 1 stacks `r` factor rows (`W = V = U`, `U = factorsᵀ`) and `d`
/// identity rows, giving `[(U x) ⊙ (U x); x ⊙ x]`. Layer 2 forms
/// `½[Σ_f (U_f x)² - Σ_i ‖v_i‖² x_i²]`. When the linear part is non-zero an
/// extra layer-1 unit `(w1ᵀx + w0) · 1` carries it through.
pub fn from_fm2(model: &FM2Model) -> Result<LadderNetwork> {
    model.validate()?;
    let d = model.input_dim();
    let r = model.factors.ncols();
    let has_linear = model.w0 != 0.0 || model.w1.iter().any(|&w| w != 0.0);
    let width = r + d + usize::from(has_linear);

    let u = model.factors.t();
    let mut w1 = Array2::zeros((width, d + 1));
    w1.slice_mut(s![..r, ..d]).assign(&u);
    w1.slice_mut(s![r..r + d, ..d]).assign(&Array2::eye(d));
    let mut v1 = w1.clone();
    if has_linear {
        w1.slice_mut(s![r + d, ..d]).assign(&model.w1);
        w1[[r + d, d]] = model.w0;
        v1[[r + d, d]] = 1.0;
    }

    let norms = model.factors.map_axis(Axis(1), |row| row.dot(&row));
    let mut parts = vec![Array1::from_elem(r, 0.5), norms * -0.5];
    if has_linear {
        parts.push(Array1::ones(1));
    }
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    let w2 = concatenate(Axis(0), &views).expect("1-d parts").insert_axis(Axis(0));

    let layers = vec![
        LadderLayer::new(w1, v1, None)?,
        LadderLayer::new(w2, constant_selector(d), None)?,
    ];
    LadderNetwork::new(layers, Head::ScalarRegression)
}
