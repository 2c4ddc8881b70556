//! Ladder layers, networks and the product-activation forward pass.
//!
//! A ladder layer maps the previous hidden vector `h` and the raw network
//! input `x` to `(W h + b) ⊙ (V x)`. Every layer sees the raw input through
//! its `V` branch, so a network of depth `L` without intercepts is a
//! homogeneous polynomial of degree `L + 1` in `x`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, LpnnError, Result};
use crate::train::BatchNormParams;

/// One layer's weight pair plus optional intercept on the `W` branch.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderLayer {
    w: Array2<f64>,
    v: Array2<f64>,
    b: Option<Array1<f64>>,
}

impl LadderLayer {
    pub fn new(w: Array2<f64>, v: Array2<f64>, b: Option<Array1<f64>>) -> Result<Self> {
        if w.nrows() != v.nrows() {
            return Err(shape_err(format!("W has {} rows but V has {}", w.nrows(), v.nrows())));
        }
        if let Some(b) = &b {
            if b.len() != w.nrows() {
                return Err(shape_err(format!(
                    "intercept has length {} but layer width is {}",
                    b.len(),
                    w.nrows()
                )));
            }
        }
        let finite = w
            .iter()
            .chain(v.iter())
            .chain(b.iter().flatten())
            .all(|a| a.is_finite());
        if !finite {
            return Err(LpnnError::NonFinite("layer weights".into()));
        }
        Ok(Self { w, v, b })
    }

    pub fn w(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn v(&self) -> &Array2<f64> {
        &self.v
    }

    pub fn b(&self) -> Option<&Array1<f64>> {
        self.b.as_ref()
    }

    /// Output width `d_out`.
    pub fn width(&self) -> usize {
        self.w.nrows()
    }

    /// Width of the hidden vector consumed by the `W` branch.
    pub fn fan_in(&self) -> usize {
        self.w.ncols()
    }

    /// Dimension of the raw network input consumed by the `V` branch.
    pub fn input_dim(&self) -> usize {
        self.v.ncols()
    }

    pub fn has_intercept(&self) -> bool {
        self.b.is_some()
    }

    pub(crate) fn w_mut(&mut self) -> &mut Array2<f64> {
        &mut self.w
    }

    pub(crate) fn v_mut(&mut self) -> &mut Array2<f64> {
        &mut self.v
    }

    pub(crate) fn b_mut(&mut self) -> Option<&mut Array1<f64>> {
        self.b.as_mut()
    }

    /// Returns a copy with `W` replaced, keeping `V` and `b`.
    pub fn with_w(&self, w: Array2<f64>) -> Result<Self> {
        if w.dim() != self.w.dim() {
            return Err(shape_err(format!("W must be {:?}, got {:?}", self.w.dim(), w.dim())));
        }
        Self::new(w, self.v.clone(), self.b.clone())
    }

    /// Returns a copy with `V` replaced, keeping `W` and `b`.
    pub fn with_v(&self, v: Array2<f64>) -> Result<Self> {
        if v.dim() != self.v.dim() {
            return Err(shape_err(format!("V must be {:?}, got {:?}", self.v.dim(), v.dim())));
        }
        Self::new(self.w.clone(), v, self.b.clone())
    }

    /// Pre-product input `u = W h_prev + b`.
    pub fn pre_product(&self, h_prev: ArrayView1<f64>) -> Array1<f64> {
        let mut u = self.w.dot(&h_prev);
        if let Some(b) = &self.b {
            u += b;
        }
        u
    }

    /// Raw-input branch `V x`.
    pub fn input_branch(&self, x: ArrayView1<f64>) -> Array1<f64> {
        self.v.dot(&x)
    }
}

/// Single-layer product activation `(W h_prev + b) ⊙ (V x)`.
pub fn layer_forward(layer: &LadderLayer, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    if h_prev.len() != layer.fan_in() {
        return Err(shape_err(format!(
            "h_prev has length {} but W has {} columns",
            h_prev.len(),
            layer.fan_in()
        )));
    }
    if x.len() != layer.input_dim() {
        return Err(shape_err(format!(
            "x has length {} but V has {} columns",
            x.len(),
            layer.input_dim()
        )));
    }
    if !h_prev.iter().chain(x).all(|a| a.is_finite()) {
        return Err(LpnnError::NonFinite("layer input".into()));
    }
    let u = layer.pre_product(ArrayView1::from(h_prev));
    let p = layer.input_branch(ArrayView1::from(x));
    Ok((u * p).to_vec())
}

/// How the final hidden vector `h^L` is interpreted.
///
/// `h^L` itself is always the raw polynomial output; the head only decides
/// which loss applies and how predictions are read off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Head {
    Raw,
    ScalarRegression,
    BinaryLogit,
    KClassLogits,
}

/// Per-layer record of a forward pass.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActivationTrace {
    /// `u^ℓ = W^ℓ h^{ℓ-1} + b^ℓ`, the input to the product activation.
    pub u: Vec<Array1<f64>>,
    /// `h^ℓ`, the product-activation response (before any batch norm).
    pub h: Vec<Array1<f64>>,
}

/// Ordered ladder layers plus optional batch norm after each hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderNetwork {
    layers: Vec<LadderLayer>,
    input_dim: usize,
    head: Head,
    /// One entry per hidden layer (`L - 1` entries) when present.
    bn: Option<Vec<BatchNormParams>>,
    dropout_rate: f64,
}

impl LadderNetwork {
    pub fn new(layers: Vec<LadderLayer>, head: Head) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| LpnnError::Config("a network needs at least one layer".into()))?;
        let input_dim = first.input_dim();
        if first.fan_in() != input_dim {
            return Err(shape_err(format!(
                "layer 1 W has {} columns but the input dimension is {}",
                first.fan_in(),
                input_dim
            )));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].fan_in() != pair[0].width() {
                return Err(shape_err(format!(
                    "layer {} W has {} columns but layer {} has width {}",
                    i + 2,
                    pair[1].fan_in(),
                    i + 1,
                    pair[0].width()
                )));
            }
        }
        for (i, layer) in layers.iter().enumerate() {
            if layer.input_dim() != input_dim {
                return Err(shape_err(format!(
                    "layer {} V has {} columns but the input dimension is {}",
                    i + 1,
                    layer.input_dim(),
                    input_dim
                )));
            }
        }
        Ok(Self {
            layers,
            input_dim,
            head,
            bn: None,
            dropout_rate: 0.0,
        })
    }

    /// Attaches batch norm after each hidden layer (`L - 1` parameter sets).
    pub fn with_batch_norm(mut self, bn: Vec<BatchNormParams>) -> Result<Self> {
        if bn.len() + 1 != self.layers.len() {
            return Err(shape_err(format!(
                "expected {} batch-norm layers, got {}",
                self.layers.len() - 1,
                bn.len()
            )));
        }
        for (i, p) in bn.iter().enumerate() {
            if p.len() != self.layers[i].width() {
                return Err(shape_err(format!(
                    "batch norm {} has width {} but layer {} has width {}",
                    i + 1,
                    p.len(),
                    i + 1,
                    self.layers[i].width()
                )));
            }
        }
        self.bn = Some(bn);
        Ok(self)
    }

    pub fn with_dropout(mut self, rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(LpnnError::Config(format!("dropout rate {rate} not in [0, 1)")));
        }
        self.dropout_rate = rate;
        Ok(self)
    }

    pub fn layers(&self) -> &[LadderLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [LadderLayer] {
        &mut self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, LadderLayer::width)
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn batch_norm(&self) -> Option<&[BatchNormParams]> {
        self.bn.as_deref()
    }

    pub(crate) fn batch_norm_mut(&mut self) -> Option<&mut [BatchNormParams]> {
        self.bn.as_deref_mut()
    }

    pub fn dropout_rate(&self) -> f64 {
        self.dropout_rate
    }

    pub fn has_intercepts(&self) -> bool {
        self.layers.iter().any(LadderLayer::has_intercept)
    }

    /// True when the network is a bare product chain: no intercepts, no batch norm.
    pub fn is_intercept_free(&self) -> bool {
        !self.has_intercepts() && self.bn.is_none()
    }

    /// Replaces one layer, keeping everything else. Shapes must match.
    pub fn with_layer(&self, index: usize, layer: LadderLayer) -> Result<Self> {
        let old = self
            .layers
            .get(index)
            .ok_or_else(|| shape_err(format!("layer index {index} out of range")))?;
        if old.w.dim() != layer.w.dim() || old.v.dim() != layer.v.dim() {
            return Err(shape_err(format!(
                "replacement for layer {} has different shape",
                index + 1
            )));
        }
        let mut out = self.clone();
        out.layers[index] = layer;
        Ok(out)
    }

    fn check_inference_ready(&self) -> Result<()> {
        if let Some(bn) = &self.bn {
            if bn.iter().any(|p| !p.frozen) {
                return Err(LpnnError::State(
                    "batch norm is in training mode; forward needs frozen statistics".into(),
                ));
            }
        }
        Ok(())
    }

    /// Inference forward pass returning `h^L` and the per-layer trace.
    pub fn forward(&self, x: &[f64]) -> Result<(Array1<f64>, ActivationTrace)> {
        self.check_inference_ready()?;
        if x.len() != self.input_dim {
            return Err(shape_err(format!(
                "input has length {} but the network expects {}",
                x.len(),
                self.input_dim
            )));
        }
        if !x.iter().all(|a| a.is_finite()) {
            return Err(LpnnError::NonFinite("network input".into()));
        }
        let x = ArrayView1::from(x);
        let mut trace = ActivationTrace::default();
        let mut h = x.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let u = layer.pre_product(h.view());
            let out = &u * &layer.input_branch(x);
            trace.u.push(u);
            trace.h.push(out.clone());
            h = match self.bn.as_ref().and_then(|bn| bn.get(l)) {
                Some(p) => p.apply_frozen(out.view()),
                None => out,
            };
        }
        Ok((h, trace))
    }

    /// Convenience wrapper returning only `h^L`.
    pub fn output(&self, x: &[f64]) -> Result<Array1<f64>> {
        self.forward(x).map(|(out, _)| out)
    }

    /// Row-wise forward over an `n × d_0` batch; identical to looping [`forward`].
    ///
    /// [`forward`]: LadderNetwork::forward
    pub fn forward_batch(&self, xs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if xs.ncols() != self.input_dim {
            return Err(shape_err(format!(
                "batch has {} columns but the network expects {}",
                xs.ncols(),
                self.input_dim
            )));
        }
        let mut out = Array2::zeros((xs.nrows(), self.output_dim()));
        for (row, mut dst) in xs.axis_iter(Axis(0)).zip(out.axis_iter_mut(Axis(0))) {
            let x = row.to_vec();
            dst.assign(&self.output(&x)?);
        }
        Ok(out)
    }
}

/// Random initialization options for [`init_network`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitConfig {
    /// Weights are drawn from `N(0, (gain / sqrt(fan_in))^2)`.
    pub gain: f64,
    pub intercept: bool,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            gain: 1.0,
            intercept: true,
        }
    }
}

/// Builds a network with the given layer widths (the last is the output width).
pub fn init_network(
    input_dim: usize,
    widths: &[usize],
    head: Head,
    init: InitConfig,
    seed: u64,
) -> Result<LadderNetwork> {
    if input_dim == 0 || widths.is_empty() || widths.contains(&0) {
        return Err(LpnnError::Config(format!(
            "invalid architecture: input {input_dim}, widths {widths:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = Vec::with_capacity(widths.len());
    let mut fan_in = input_dim;
    for &width in widths {
        let w = gaussian_matrix(&mut rng, width, fan_in, init.gain / (fan_in as f64).sqrt());
        let v = gaussian_matrix(&mut rng, width, input_dim, init.gain / (input_dim as f64).sqrt());
        let b = init.intercept.then(|| Array1::zeros(width));
        layers.push(LadderLayer::new(w, v, b)?);
        fan_in = width;
    }
    LadderNetwork::new(layers, head)
}

pub(crate) fn gaussian_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, std: f64) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("std is finite and non-negative");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar_chain(depth: usize) -> LadderNetwork {
        let layers = (0..depth)
            .map(|_| LadderLayer::new(array![[1.0]], array![[1.0]], None).unwrap())
            .collect();
        LadderNetwork::new(layers, Head::Raw).unwrap()
    }

    #[test]
    fn layer_forward_scalar() {
        let layer = LadderLayer::new(array![[1.0]], array![[2.0]], None).unwrap();
        assert_eq!(layer_forward(&layer, &[3.0], &[3.0]).unwrap(), vec![18.0]);
        let layer = LadderLayer::new(array![[1.0]], array![[1.0]], None).unwrap();
        assert_eq!(layer_forward(&layer, &[0.0], &[-7.5]).unwrap(), vec![0.0]);
    }

    #[test]
    fn layer_forward_matches_scalar_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = gaussian_matrix(&mut rng, 3, 2, 1.0);
        let v = gaussian_matrix(&mut rng, 3, 4, 1.0);
        let b = array![0.3, -1.2, 0.7];
        let layer = LadderLayer::new(w.clone(), v.clone(), Some(b.clone())).unwrap();
        let h = [0.5, -1.5];
        let x = [1.0, 2.0, -0.25, 0.125];
        let got = layer_forward(&layer, &h, &x).unwrap();
        for i in 0..3 {
            let mut u = b[i];
            for j in 0..2 {
                u += w[[i, j]] * h[j];
            }
            let mut p = 0.0;
            for n in 0..4 {
                p += v[[i, n]] * x[n];
            }
            assert!((got[i] - u * p).abs() <= 1e-14 * (u * p).abs().max(1.0));
        }
    }

    #[test]
    fn layer_forward_errors() {
        let layer = LadderLayer::new(array![[1.0, 2.0]], array![[1.0]], None).unwrap();
        assert!(matches!(
            layer_forward(&layer, &[1.0], &[1.0]),
            Err(LpnnError::Shape(_))
        ));
        assert!(matches!(
            layer_forward(&layer, &[1.0, 1.0], &[f64::NAN]),
            Err(LpnnError::NonFinite(_))
        ));
        assert!(LadderLayer::new(array![[1.0]], array![[1.0], [2.0]], None).is_err());
        assert!(LadderLayer::new(array![[f64::INFINITY]], array![[1.0]], None).is_err());
    }

    #[test]
    fn scalar_cube() {
        let net = scalar_chain(2);
        let (out, trace) = net.forward(&[2.0]).unwrap();
        assert_eq!(trace.h[0][0], 4.0);
        assert_eq!(trace.h[1][0], 8.0);
        assert_eq!(out[0], 8.0);
    }

    #[test]
    fn pure_product_unit() {
        let layer = LadderLayer::new(array![[1.0, 0.0]], array![[0.0, 1.0]], None).unwrap();
        let net = LadderNetwork::new(vec![layer], Head::Raw).unwrap();
        assert_eq!(net.output(&[3.0, 5.0]).unwrap()[0], 15.0);
    }

    #[test]
    fn trace_records_product() {
        let net = init_network(
            3,
            &[4, 2],
            Head::Raw,
            InitConfig {
                gain: 1.0,
                intercept: false,
            },
            5,
        )
        .unwrap();
        let x = [0.3, -0.7, 1.1];
        let (_, trace) = net.forward(&x).unwrap();
        for (l, layer) in net.layers().iter().enumerate() {
            let p = layer.input_branch(ArrayView1::from(&x[..]));
            for i in 0..layer.width() {
                assert_eq!(trace.h[l][i], trace.u[l][i] * p[i]);
            }
        }
    }

    #[test]
    fn network_shape_validation() {
        let l1 = LadderLayer::new(array![[1.0, 0.0]], array![[0.0, 1.0]], None).unwrap();
        let bad = LadderLayer::new(array![[1.0, 0.0]], array![[1.0, 1.0]], None).unwrap();
        assert!(LadderNetwork::new(vec![l1.clone(), bad], Head::Raw).is_err());
        let bad_v = LadderLayer::new(array![[1.0]], array![[1.0, 1.0, 1.0]], None).unwrap();
        assert!(LadderNetwork::new(vec![l1.clone(), bad_v], Head::Raw).is_err());
        assert!(LadderNetwork::new(vec![], Head::Raw).is_err());
        let net = LadderNetwork::new(vec![l1], Head::Raw).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(LpnnError::Shape(_))));
    }

    #[test]
    fn unfrozen_batch_norm_rejected() {
        let net = init_network(2, &[3, 1], Head::Raw, InitConfig::default(), 1).unwrap();
        let mut bn = BatchNormParams::identity(3);
        bn.frozen = false;
        let net = net.with_batch_norm(vec![bn]).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(LpnnError::State(_))));
    }

    #[test]
    fn batch_of_copies_and_single_row() {
        let net = init_network(3, &[5, 2], Head::Raw, InitConfig::default(), 9).unwrap();
        let x = [0.1, 0.2, -0.3];
        let xs = Array2::from_shape_vec((2, 3), [x, x].concat()).unwrap();
        let out = net.forward_batch(xs.view()).unwrap();
        assert_eq!(out.row(0), out.row(1));
        assert_eq!(out.row(0), net.output(&x).unwrap());
    }
}
