use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

/// Inverted dropout: zero each entry with probability `rate` and scale
/// survivors by `1 / (1 - rate)`. Identity when `training` is false.
pub fn dropout_apply<R: Rng + ?Sized>(h: ArrayView1<f64>, rate: f64, rng: &mut R, training: bool) -> Array1<f64> {
    if !training || rate == 0.0 {
        return h.to_owned();
    }
    let keep = 1.0 / (1.0 - rate);
    h.mapv(|v| if rng.random::<f64>() < rate { 0.0 } else { v * keep })
}

/// Multiplicative dropout mask of shape `rows × cols` with entries `0` or `1 / (1 - rate)`.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, rate: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 / (1.0 - rate);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < rate { 0.0 } else { keep })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_rate_and_inference_are_identity() {
        let h = array![1.0, -2.0, 3.5];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(dropout_apply(h.view(), 0.0, &mut rng, true), h);
        assert_eq!(dropout_apply(h.view(), 0.7, &mut rng, false), h);
    }

    #[test]
    fn seeded_mask_is_reproducible() {
        let h = array![1.0, 2.0, 3.0, 4.0];
        let a = dropout_apply(h.view(), 0.5, &mut ChaCha8Rng::seed_from_u64(42), true);
        let b = dropout_apply(h.view(), 0.5, &mut ChaCha8Rng::seed_from_u64(42), true);
        assert_eq!(a, b);
        for (o, i) in a.iter().zip(&h) {
            assert!(*o == 0.0 || *o == 2.0 * i);
        }
    }

    #[test]
    fn monte_carlo_mean_is_unbiased() {
        let h = array![1.0, -2.0, 0.5];
        let rate = 0.3;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut sum = Array1::<f64>::zeros(3);
        for _ in 0..n {
            sum += &dropout_apply(h.view(), rate, &mut rng, true);
        }
        let mean = sum / n as f64;
        for i in 0..3 {
            // Per-draw variance of a scaled Bernoulli: h^2 * rate / (1 - rate).
            let se = (h[i] * h[i] * rate / (1.0 - rate) / n as f64).sqrt();
            assert!((mean[i] - h[i]).abs() < 3.0 * se, "entry {i}: {} vs {}", mean[i], h[i]);
        }
    }
}
