//! The network restricted to a line `x = x0 + t g` as a univariate polynomial.

use ndarray::{s, Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use super::jacobian::require_no_batch_norm;
use super::poly::{derivative, polyval, real_roots};
use crate::error::{shape_err, LpnnError, Result};
use crate::network::LadderNetwork;

/// Coefficients of `h^ℓ(x0 + t g)`, one row per unit.
///
/// Column `j` holds the coefficient of `t^{(ℓ+1)-j}`: highest order first,
/// constant term last.
#[derive(Debug, Clone, PartialEq)]
pub struct LineCoeffs {
    pub coeffs: Array2<f64>,
}

impl LineCoeffs {
    /// Polynomial degree `ℓ + 1`.
    pub fn degree(&self) -> usize {
        self.coeffs.ncols() - 1
    }

    pub fn units(&self) -> usize {
        self.coeffs.nrows()
    }

    /// Coefficients of unit `i`, highest order first.
    pub fn unit(&self, i: usize) -> Vec<f64> {
        self.coeffs.row(i).to_vec()
    }

    pub fn eval(&self, t: f64) -> Array1<f64> {
        self.coeffs
            .rows()
            .into_iter()
            .map(|r| r.iter().fold(0.0, |acc, &c| acc * t + c))
            .collect()
    }
}

/// `α(h^ℓ)` for every layer `ℓ = 1..L`.
///
/// Starting from `α(h^0) = [g, x0]`, each layer applies
/// `α(h^ℓ) = [diag(V g) α(u), 0] + [0, diag(V x0) α(u)]` with
/// `α(u) = W α(h^{ℓ-1})` plus the intercept in the constant column.
pub fn line_coeffs_all(net: &LadderNetwork, x0: &[f64], g: &[f64]) -> Result<Vec<LineCoeffs>> {
    require_no_batch_norm(net, "line-polynomial extraction")?;
    let d = net.input_dim();
    if x0.len() != d || g.len() != d {
        return Err(shape_err(format!(
            "x0 and g must have length {d}, got {} and {}",
            x0.len(),
            g.len()
        )));
    }
    let x0 = ArrayView1::from(x0);
    let g = ArrayView1::from(g);
    let mut alpha = Array2::zeros((d, 2));
    alpha.column_mut(0).assign(&g);
    alpha.column_mut(1).assign(&x0);
    let mut out = Vec::with_capacity(net.depth());
    for layer in net.layers() {
        let mut u = layer.w().dot(&alpha);
        if let Some(b) = layer.b() {
            let last = u.ncols() - 1;
            let mut c = u.column_mut(last);
            c += b;
        }
        let vg = layer.input_branch(g);
        let vx0 = layer.input_branch(x0);
        let cols = u.ncols();
        let mut next = Array2::zeros((u.nrows(), cols + 1));
        next.slice_mut(s![.., ..cols])
            .assign(&(&u * &vg.view().insert_axis(ndarray::Axis(1))));
        let mut tail = next.slice_mut(s![.., 1..]);
        tail += &(&u * &vx0.view().insert_axis(ndarray::Axis(1)));
        alpha = next;
        out.push(LineCoeffs { coeffs: alpha.clone() });
    }
    Ok(out)
}

/// Coefficients of the network output `h^L(x0 + t g)`.
pub fn line_coeffs(net: &LadderNetwork, x0: &[f64], g: &[f64]) -> Result<LineCoeffs> {
    Ok(line_coeffs_all(net, x0, g)?
        .pop()
        .expect("networks have at least one layer"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineMinimum {
    pub t: f64,
    pub value: f64,
}

/// Global minimum of a polynomial (highest order first) on `[lo, hi]`.
///
/// Candidates are the endpoints and the real roots of the derivative inside
/// the interval, each polished by one Newton step.
pub fn minimize_poly(coeffs: &[f64], lo: f64, hi: f64) -> Result<LineMinimum> {
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(LpnnError::Config("interval bounds must be finite".into()));
    }
    if lo > hi {
        return Err(LpnnError::Config(format!("empty interval [{lo}, {hi}]")));
    }
    let d1 = derivative(coeffs);
    let d2 = derivative(&d1);
    let mut candidates = vec![lo, hi];
    for r in real_roots(&d1) {
        let slope = polyval(&d2, r);
        let polished = if slope != 0.0 { r - polyval(&d1, r) / slope } else { r };
        let t = if polished.is_finite() { polished } else { r };
        if (lo..=hi).contains(&t) {
            candidates.push(t);
        } else if (lo..=hi).contains(&r) {
            candidates.push(r);
        }
    }
    let best = candidates
        .into_iter()
        .map(|t| LineMinimum {
            t,
            value: polyval(coeffs, t),
        })
        .fold(None::<LineMinimum>, |best, c| match best {
            Some(b) if b.value <= c.value => Some(b),
            _ => Some(c),
        })
        .expect("endpoints are always candidates");
    Ok(best)
}

/// Minimizes the scalar network output along `x0 + t g` for `t ∈ [lo, hi]`.
pub fn minimize_along(net: &LadderNetwork, x0: &[f64], g: &[f64], t_range: (f64, f64)) -> Result<LineMinimum> {
    if net.output_dim() != 1 {
        return Err(LpnnError::Precondition(format!(
            "line minimization needs a scalar output, network has {}",
            net.output_dim()
        )));
    }
    let coeffs = line_coeffs(net, x0, g)?;
    minimize_poly(&coeffs.unit(0), t_range.0, t_range.1)
}
