use ndarray::{ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{LpnnError, Result};
use crate::network::LadderNetwork;

/// `(u_i, h_i)` pairs of one hidden unit across a set of samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterSeries {
    /// 0-based layer index.
    pub layer: usize,
    pub unit: usize,
    pub points: Vec<(f64, f64)>,
}

/// Product-activation input/response pairs for the chosen units of one layer.
pub fn activation_scatter(
    net: &LadderNetwork,
    xs: ArrayView2<f64>,
    layer: usize,
    units: &[usize],
) -> Result<Vec<ScatterSeries>> {
    let width = net
        .layers()
        .get(layer)
        .ok_or_else(|| LpnnError::Config(format!("layer {layer} out of range (depth {})", net.depth())))?
        .width();
    if let Some(&bad) = units.iter().find(|&&u| u >= width) {
        return Err(LpnnError::Config(format!(
            "unit {bad} out of range for layer {layer} of width {width}"
        )));
    }
    let mut series: Vec<ScatterSeries> = units
        .iter()
        .map(|&unit| ScatterSeries {
            layer,
            unit,
            points: Vec::with_capacity(xs.nrows()),
        })
        .collect();
    for row in xs.axis_iter(Axis(0)) {
        let (_, trace) = net.forward(&row.to_vec())?;
        for s in &mut series {
            s.points.push((trace.u[layer][s.unit], trace.h[layer][s.unit]));
        }
    }
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Head, LadderLayer};
    use ndarray::array;

    #[test]
    fn product_unit_ratio() {
        let layer = LadderLayer::new(array![[1.0, 2.0]], array![[0.5, -1.0]], None).unwrap();
        let net = LadderNetwork::new(vec![layer], Head::Raw).unwrap();
        let xs = array![[1.0, 2.0], [-0.5, 0.75], [3.0, 1.0]];
        let s = activation_scatter(&net, xs.view(), 0, &[0]).unwrap();
        assert_eq!(s.len(), 1);
        for ((u, h), x) in s[0].points.iter().zip(xs.rows()) {
            let vx = 0.5 * x[0] - x[1];
            assert!((h / u - vx).abs() < 1e-14);
        }
    }

    #[test]
    fn single_sample_single_pair() {
        let layer = LadderLayer::new(array![[1.0]], array![[1.0]], None).unwrap();
        let net = LadderNetwork::new(vec![layer], Head::Raw).unwrap();
        let s = activation_scatter(&net, array![[2.0]].view(), 0, &[0]).unwrap();
        assert_eq!(s[0].points, vec![(2.0, 4.0)]);
        assert!(activation_scatter(&net, array![[2.0]].view(), 1, &[0]).is_err());
        assert!(activation_scatter(&net, array![[2.0]].view(), 0, &[1]).is_err());
    }
}
