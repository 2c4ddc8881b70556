//! Independent reference implementations shared by the integration tests.
//!
//! Everything here works on plain nested `Vec`s with scalar loops so it does
//! not reuse any of the library's numerical code paths.

#![allow(dead_code)]

pub mod grad;

use lpnn::network::{Head, LadderLayer, LadderNetwork};
use lpnn::train::BatchNormParams;
use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub type Mat = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
pub struct PlainLayer {
    pub w: Mat,
    pub v: Mat,
    pub b: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct PlainBn {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub eps: f64,
}

pub fn mat(a: &Array2<f64>) -> Mat {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[[i, j]]).collect())
        .collect()
}

pub fn plain_layers(net: &LadderNetwork) -> Vec<PlainLayer> {
    net.layers()
        .iter()
        .map(|l| PlainLayer {
            w: mat(l.w()),
            v: mat(l.v()),
            b: l.b().map(|b| b.to_vec()),
        })
        .collect()
}

pub fn plain_bn(net: &LadderNetwork) -> Option<Vec<PlainBn>> {
    net.batch_norm().map(|bn| {
        bn.iter()
            .map(|p| PlainBn {
                gamma: p.gamma.to_vec(),
                beta: p.beta.to_vec(),
                mu: p.mu.to_vec(),
                sigma: p.sigma.to_vec(),
                eps: p.eps,
            })
            .collect()
    })
}

pub fn matvec(m: &Mat, x: &[f64]) -> Vec<f64> {
    m.iter()
        .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

/// One layer by scalar loops: `(W h + b) ⊙ (V x)`.
pub fn naive_layer(l: &PlainLayer, h: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(l.w.len());
    for i in 0..l.w.len() {
        let mut u = l.b.as_ref().map_or(0.0, |b| b[i]);
        for j in 0..h.len() {
            u += l.w[i][j] * h[j];
        }
        let mut p = 0.0;
        for n in 0..x.len() {
            p += l.v[i][n] * x[n];
        }
        out.push(u * p);
    }
    out
}

/// Full forward pass with optional frozen batch norm after hidden layers.
pub fn naive_forward(layers: &[PlainLayer], bn: Option<&[PlainBn]>, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for (l, layer) in layers.iter().enumerate() {
        h = naive_layer(layer, &h, x);
        if let Some(bn) = bn {
            if l + 1 < layers.len() {
                let p = &bn[l];
                for i in 0..h.len() {
                    h[i] = p.gamma[i] * (h[i] - p.mu[i]) / (p.sigma[i] + p.eps) + p.beta[i];
                }
            }
        }
    }
    h
}

pub fn net_forward(net: &LadderNetwork, x: &[f64]) -> Vec<f64> {
    let bn = plain_bn(net);
    naive_forward(&plain_layers(net), bn.as_deref(), x)
}

pub fn gaussian(rng: &mut ChaCha8Rng, std: f64) -> f64 {
    // Box-Muller keeps the oracle independent of rand_distr.
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random();
    std * (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || gaussian(rng, std))
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, std: f64) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng, std)).collect()
}

/// Random network with weight std `1/sqrt(fan_in)` and optional random intercepts.
pub fn random_net(rng: &mut ChaCha8Rng, d0: usize, widths: &[usize], intercept: bool, head: Head) -> LadderNetwork {
    let mut layers = Vec::new();
    let mut prev = d0;
    for &w in widths {
        let wm = random_matrix(rng, w, prev, 1.0 / (prev as f64).sqrt());
        let vm = random_matrix(rng, w, d0, 1.0 / (d0 as f64).sqrt());
        let b = intercept.then(|| Array1::from(random_vec(rng, w, 0.5)));
        layers.push(LadderLayer::new(wm, vm, b).unwrap());
        prev = w;
    }
    LadderNetwork::new(layers, head).unwrap()
}

/// Random depth in `1..=max_depth` and widths in `1..=max_width`.
pub fn random_shape(rng: &mut ChaCha8Rng, max_depth: usize, max_width: usize, out: usize) -> (usize, Vec<usize>) {
    let d0 = rng.random_range(1..=max_width);
    let depth = rng.random_range(1..=max_depth);
    let mut widths: Vec<usize> = (0..depth - 1).map(|_| rng.random_range(1..=max_width)).collect();
    widths.push(out);
    (d0, widths)
}

pub fn random_bn(rng: &mut ChaCha8Rng, net: &LadderNetwork) -> Vec<BatchNormParams> {
    net.layers()[..net.depth() - 1]
        .iter()
        .map(|l| {
            let w = l.width();
            BatchNormParams::new(
                Array1::from(random_vec(rng, w, 1.0)),
                Array1::from(random_vec(rng, w, 1.0)),
                Array1::from(random_vec(rng, w, 1.0)),
                Array1::from_shape_simple_fn(w, || rng.random_range(0.2..2.0)),
                1e-5,
            )
            .unwrap()
        })
        .collect()
}

/// Gaussian elimination with partial pivoting.
pub fn solve(mut a: Mat, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

/// Coefficients (highest power first) of the degree `nodes.len()-1`
/// polynomial through `(nodes, values)`, from the Vandermonde system.
pub fn vandermonde_fit(nodes: &[f64], values: &[f64]) -> Vec<f64> {
    let k = nodes.len();
    let a: Mat = nodes
        .iter()
        .map(|&t| (0..k).map(|j| t.powi((k - 1 - j) as i32)).collect())
        .collect();
    solve(a, values.to_vec())
}

pub fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().fold(0.0, |acc, &v| acc * t + v)
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn jacobi_eigenvalues(mut a: Mat) -> Vec<f64> {
    let n = a.len();
    for _ in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j].powi(2))
            .sum();
        let scale: f64 = (0..n).map(|i| a[i][i].powi(2)).sum::<f64>().max(1e-300);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Largest singular value as the root of the top eigenvalue of `MᵀM`.
pub fn spectral_norm_oracle(m: &Array2<f64>) -> f64 {
    let (r, c) = m.dim();
    let mtm: Mat = (0..c)
        .map(|i| (0..c).map(|j| (0..r).map(|k| m[[k, i]] * m[[k, j]]).sum()).collect())
        .collect();
    jacobi_eigenvalues(mtm).into_iter().fold(0.0, f64::max).max(0.0).sqrt()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Five-point central difference of `f` at `x` along coordinate steps of size `h`.
pub fn central_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

/// One Richardson step on the five-point stencil: `(16 D(h/2) - D(h)) / 15`, truncation O(h^6).
pub fn richardson_diff(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    (16.0 * central_diff(&f, x, h / 2.0) - central_diff(&f, x, h)) / 15.0
}

/// Uniform sample in the ball of radius `r`.
pub fn sample_ball(rng: &mut ChaCha8Rng, d: usize, r: f64) -> Vec<f64> {
    let dir = random_vec(rng, d, 1.0);
    let n = norm(&dir).max(1e-300);
    let radius = r * rng.random::<f64>().powf(1.0 / d as f64);
    dir.iter().map(|v| v / n * radius).collect()
}

/// Output gradient row `∂h^L_k / ∂x` by central differences of the oracle forward.
pub fn fd_input_jacobian(net: &LadderNetwork, x: &[f64]) -> Mat {
    let layers = plain_layers(net);
    let out = net.output_dim();
    let mut jac = vec![vec![0.0; x.len()]; out];
    for n in 0..x.len() {
        for (k, row) in jac.iter_mut().enumerate() {
            row[n] = central_diff(
                |t| {
                    let mut xp = x.to_vec();
                    xp[n] = t;
                    naive_forward(&layers, None, &xp)[k]
                },
                x[n],
                1e-4,
            );
        }
    }
    jac
}

/// `Σ_k π_k (λ + p_kᵀx)^m` by repeated multiplication.
pub fn kernel_oracle(pi: &[f64], p: &Mat, lambda: f64, m: u32, x: &[f64]) -> f64 {
    let mut y = 0.0;
    for (k, row) in p.iter().enumerate() {
        let mut s = lambda;
        for (a, b) in row.iter().zip(x) {
            s += a * b;
        }
        let mut pow = 1.0;
        for _ in 0..m {
            pow *= s;
        }
        y += pi[k] * pow;
    }
    y
}

/// `w0 + w1ᵀx + Σ_{i<j} ⟨v_i, v_j⟩ x_i x_j` over explicit pairs.
pub fn fm_oracle(w0: f64, w1: &[f64], v: &Mat, x: &[f64]) -> f64 {
    let mut y = w0;
    for i in 0..x.len() {
        y += w1[i] * x[i];
    }
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            let dot: f64 = v[i].iter().zip(&v[j]).map(|(a, b)| a * b).sum();
            y += dot * x[i] * x[j];
        }
    }
    y
}

/// `[x, 1]`.
pub fn augmented(x: &[f64]) -> Vec<f64> {
    let mut a = x.to_vec();
    a.push(1.0);
    a
}
