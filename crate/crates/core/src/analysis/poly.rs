//! Dense univariate polynomials stored highest order first.

use nalgebra::DMatrix;

/// Horner evaluation of `c[0] t^n + ... + c[n]`.
pub fn polyval(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, &c| acc * t + c)
}

/// Coefficients of the derivative, highest order first.
pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    let n = coeffs.len().saturating_sub(1);
    coeffs[..n]
        .iter()
        .enumerate()
        .map(|(i, &c)| c * (n - i) as f64)
        .collect()
}

/// Drops leading coefficients that are zero or negligible relative to the largest one.
fn trim_leading(coeffs: &[f64]) -> &[f64] {
    let scale = coeffs.iter().fold(0.0_f64, |a, c| a.max(c.abs()));
    let start = coeffs
        .iter()
        .position(|c| c.abs() > 1e-14 * scale)
        .unwrap_or(coeffs.len());
    &coeffs[start..]
}

/// Real roots from the eigenvalues of the companion matrix.
///
/// Eigenvalues with `|imag| > 1e-8 (1 + |real|)` are discarded.
pub fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let c = trim_leading(coeffs);
    if c.len() < 2 {
        return Vec::new();
    }
    let n = c.len() - 1;
    let lead = c[0];
    let mut companion = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        companion[(0, j)] = -c[j + 1] / lead;
    }
    for i in 1..n {
        companion[(i, i - 1)] = 1.0;
    }
    let mut roots: Vec<f64> = companion
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-8 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}
