use ndarray::{Array1, Array3};

use crate::analysis::jacobian::require_no_batch_norm;
use crate::error::{LpnnError, Result};
use crate::network::LadderNetwork;

/// One tensor-train core with shape `(out, input, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TTCore {
    pub g: Array3<f64>,
}

impl TTCore {
    pub fn dims(&self) -> [usize; 3] {
        let (a, b, c) = self.g.dim();
        [a, b, c]
    }
}

/// Tensor-train cores of an intercept-free network.
///
/// Core 0 is the identity `G^0(i, n, 0) = δ_{in}` and core `ℓ` is
/// `G^ℓ(i, n, j) = W^ℓ_{ij} V^ℓ_{in}`. Contracting every core against the
/// input along the middle index reproduces the network output.
pub fn to_tensor_train(net: &LadderNetwork) -> Result<Vec<TTCore>> {
    require_no_batch_norm(net, "tensor-train conversion")?;
    if net.has_intercepts() {
        return Err(LpnnError::Precondition(
            "tensor-train conversion needs an intercept-free network".into(),
        ));
    }
    let d0 = net.input_dim();
    let mut cores = Vec::with_capacity(net.depth() + 1);
    cores.push(TTCore {
        g: Array3::from_shape_fn((d0, d0, 1), |(i, n, _)| f64::from(u8::from(i == n))),
    });
    for layer in net.layers() {
        let (w, v) = (layer.w(), layer.v());
        let g = Array3::from_shape_fn((layer.width(), d0, layer.fan_in()), |(i, n, j)| w[[i, j]] * v[[i, n]]);
        cores.push(TTCore { g });
    }
    Ok(cores)
}

/// Tensor-train cores for a single output unit; the last core keeps only
/// row `output` so its leading dimension is 1.
pub fn to_tensor_train_output(net: &LadderNetwork, output: usize) -> Result<Vec<TTCore>> {
    if output >= net.output_dim() {
        return Err(LpnnError::Config(format!(
            "output {output} out of range for {} outputs",
            net.output_dim()
        )));
    }
    let mut cores = to_tensor_train(net)?;
    let last = cores.last_mut().expect("at least one layer");
    last.g = last.g.slice(ndarray::s![output..=output, .., ..]).to_owned();
    Ok(cores)
}

/// Contract cores against `x` in order, starting from a length-1 vector.
pub fn tt_contract(cores: &[TTCore], x: &[f64]) -> Result<Array1<f64>> {
    let mut state = Array1::ones(1);
    for (k, core) in cores.iter().enumerate() {
        let [out, n, inp] = core.dims();
        if n != x.len() {
            return Err(LpnnError::Shape(format!(
                "core {k} expects input length {n}, got {}",
                x.len()
            )));
        }
        if inp != state.len() {
            return Err(LpnnError::Shape(format!(
                "core {k} expects incoming rank {inp}, previous rank is {}",
                state.len()
            )));
        }
        let mut next = Array1::zeros(out);
        for i in 0..out {
            let mut acc = 0.0;
            for (m, &xm) in x.iter().enumerate() {
                let mut inner = 0.0;
                for j in 0..inp {
                    inner += core.g[[i, m, j]] * state[j];
                }
                acc += xm * inner;
            }
            next[i] = acc;
        }
        state = next;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_network, Head, InitConfig};

    #[test]
    fn matches_forward() {
        let init = InitConfig {
            gain: 1.0,
            intercept: false,
        };
        let net = init_network(3, &[4, 2], Head::Raw, init, 5).unwrap();
        let cores = to_tensor_train(&net).unwrap();
        assert_eq!(cores.len(), 3);
        assert_eq!(cores[0].dims(), [3, 3, 1]);
        assert_eq!(cores[2].dims(), [2, 3, 4]);
        let x = [0.4, -1.2, 0.7];
        let tt = tt_contract(&cores, &x).unwrap();
        let direct = net.output(&x).unwrap();
        for (a, b) in tt.iter().zip(direct.iter()) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        let single = to_tensor_train_output(&net, 1).unwrap();
        assert_eq!(single.last().unwrap().dims()[0], 1);
        assert!((tt_contract(&single, &x).unwrap()[0] - direct[1]).abs() < 1e-12);
    }

    #[test]
    fn intercepts_rejected() {
        let net = init_network(2, &[2], Head::Raw, InitConfig::default(), 0).unwrap();
        assert!(matches!(to_tensor_train(&net), Err(LpnnError::Precondition(_))));
    }
}
