use nalgebra::DMatrix;
use ndarray::{Array1, ArrayView2};

/// Widths above this use power iteration instead of a full SVD.
pub const SVD_MAX_DIM: usize = 512;
const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 10_000;

/// Largest singular value (spectral norm) of `m`.
pub fn operator_norm(m: ArrayView2<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows().max(m.ncols()) <= SVD_MAX_DIM {
        let dm = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]]);
        dm.singular_values().max()
    } else {
        power_iteration_norm(m)
    }
}

/// Spectral norm by power iteration on `MᵀM`.
pub fn power_iteration_norm(m: ArrayView2<f64>) -> f64 {
    let n = m.ncols();
    // Deterministic start vector with no special alignment.
    let mut v = Array1::from_shape_fn(n, |i| 1.0 + ((i as f64) * 0.618_033_988_749_895).fract());
    v /= v.dot(&v).sqrt();
    let mut sigma = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let mv = m.dot(&v);
        let mut w = m.t().dot(&mv);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        w /= norm;
        let next = mv.dot(&mv).sqrt();
        v = w;
        if (next - sigma).abs() <= POWER_TOL * next {
            sigma = next;
            break;
        }
        sigma = next;
    }
    m.dot(&v).dot(&m.dot(&v)).sqrt().max(sigma)
}
