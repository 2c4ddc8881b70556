//! Versioned JSON files for networks and tensor-train cores.
//!
//! Floats are written with the shortest representation that parses back to
//! the same bits, so a save/load cycle reproduces every weight exactly.

use std::path::Path;

use ndarray::{concatenate, Array1, Array2, Array3, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::compat::TTCore;
use crate::dataio::Standardizer;
use crate::error::{LpnnError, Result};
use crate::network::{Head, LadderLayer, LadderNetwork};
use crate::train::BatchNormParams;

pub const MODEL_FORMAT: &str = "lpnn-model";
pub const TT_FORMAT: &str = "lpnn-tt";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct MatrixDto {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl MatrixDto {
    fn from_array(m: &Array2<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.iter().copied().collect(),
        }
    }

    fn into_array(self, what: &str) -> Result<Array2<f64>> {
        Array2::from_shape_vec((self.rows, self.cols), self.data).map_err(|e| LpnnError::Data(format!("{what}: {e}")))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerDto {
    w: MatrixDto,
    v: MatrixDto,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    b: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BnDto {
    gamma: Vec<f64>,
    beta: Vec<f64>,
    mu: Vec<f64>,
    sigma: Vec<f64>,
    eps: f64,
    frozen: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    input_dim: usize,
    widths: Vec<usize>,
    head: Head,
    #[serde(default)]
    dropout_rate: f64,
    layers: Vec<LayerDto>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    batch_norm: Option<Vec<BnDto>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    class_labels: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    standardizer: Option<Standardizer>,
    #[serde(default)]
    input_constant: bool,
}

/// A network plus the preprocessing needed to use it on raw data.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub net: LadderNetwork,
    pub class_labels: Option<Vec<String>>,
    /// Applied to raw features first.
    pub standardizer: Option<Standardizer>,
    /// The network reads the (standardized) features followed by a constant 1.
    pub input_constant: bool,
}

impl ModelBundle {
    pub fn bare(net: LadderNetwork) -> Self {
        Self {
            net,
            class_labels: None,
            standardizer: None,
            input_constant: false,
        }
    }

    /// Number of raw features the bundle accepts.
    pub fn raw_input_dim(&self) -> usize {
        self.net.input_dim() - usize::from(self.input_constant)
    }

    /// Raw feature rows to network inputs.
    pub fn prepare_inputs(&self, raw: ArrayView2<f64>) -> Result<Array2<f64>> {
        if raw.ncols() != self.raw_input_dim() {
            return Err(LpnnError::Data(format!(
                "data has {} features, model expects {}",
                raw.ncols(),
                self.raw_input_dim()
            )));
        }
        let xs = match &self.standardizer {
            Some(s) => s.transform(raw)?,
            None => raw.to_owned(),
        };
        Ok(if self.input_constant {
            append_constant(xs.view())
        } else {
            xs
        })
    }
}

/// `[x, 1]` for every row.
pub fn append_constant(xs: ArrayView2<f64>) -> Array2<f64> {
    let ones = Array2::ones((xs.nrows(), 1));
    concatenate(Axis(1), &[xs, ones.view()]).expect("row counts match")
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(LpnnError::Data(format!(
            "expected a '{expected}' file, found '{format}'"
        )));
    }
    if version != FORMAT_VERSION {
        return Err(LpnnError::Data(format!("unsupported {expected} version {version}")));
    }
    Ok(())
}

fn parse<'a, T: Deserialize<'a>>(text: &'a str, what: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| LpnnError::Data(format!("malformed {what} file: {e}")))
}

pub fn model_to_json(bundle: &ModelBundle) -> Result<String> {
    let net = &bundle.net;
    let file = ModelFile {
        format: MODEL_FORMAT.into(),
        version: FORMAT_VERSION,
        input_dim: net.input_dim(),
        widths: net.layers().iter().map(LadderLayer::width).collect(),
        head: net.head(),
        dropout_rate: net.dropout_rate(),
        layers: net
            .layers()
            .iter()
            .map(|l| LayerDto {
                w: MatrixDto::from_array(l.w()),
                v: MatrixDto::from_array(l.v()),
                b: l.b().map(|b| b.to_vec()),
            })
            .collect(),
        batch_norm: net.batch_norm().map(|bn| {
            bn.iter()
                .map(|p| BnDto {
                    gamma: p.gamma.to_vec(),
                    beta: p.beta.to_vec(),
                    mu: p.mu.to_vec(),
                    sigma: p.sigma.to_vec(),
                    eps: p.eps,
                    frozen: p.frozen,
                })
                .collect()
        }),
        class_labels: bundle.class_labels.clone(),
        standardizer: bundle.standardizer.clone(),
        input_constant: bundle.input_constant,
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn model_from_json(text: &str) -> Result<ModelBundle> {
    let file: ModelFile = parse(text, "model")?;
    check_header(&file.format, file.version, MODEL_FORMAT)?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (i, dto) in file.layers.into_iter().enumerate() {
        let w = dto.w.into_array(&format!("layer {} W", i + 1))?;
        let v = dto.v.into_array(&format!("layer {} V", i + 1))?;
        layers.push(LadderLayer::new(w, v, dto.b.map(Array1::from))?);
    }
    let mut net = LadderNetwork::new(layers, file.head)?;
    if net.input_dim() != file.input_dim {
        return Err(LpnnError::Data(format!(
            "header input_dim {} disagrees with weights ({})",
            file.input_dim,
            net.input_dim()
        )));
    }
    let widths: Vec<usize> = net.layers().iter().map(LadderLayer::width).collect();
    if widths != file.widths {
        return Err(LpnnError::Data(format!(
            "header widths {:?} disagree with weights {widths:?}",
            file.widths
        )));
    }
    if let Some(bn) = file.batch_norm {
        let params = bn
            .into_iter()
            .map(|p| {
                let mut bn = BatchNormParams::new(
                    Array1::from(p.gamma),
                    Array1::from(p.beta),
                    Array1::from(p.mu),
                    Array1::from(p.sigma),
                    p.eps,
                )?;
                bn.frozen = p.frozen;
                Ok(bn)
            })
            .collect::<Result<Vec<_>>>()?;
        net = net.with_batch_norm(params)?;
    }
    net = net.with_dropout(file.dropout_rate)?;
    if file.input_constant && net.input_dim() < 2 {
        return Err(LpnnError::Data(
            "a constant-augmented model needs at least two inputs".into(),
        ));
    }
    if let Some(s) = &file.standardizer {
        if s.mean().len() + usize::from(file.input_constant) != net.input_dim() {
            return Err(LpnnError::Data(
                "standardizer width disagrees with the network input".into(),
            ));
        }
    }
    Ok(ModelBundle {
        net,
        class_labels: file.class_labels,
        standardizer: file.standardizer,
        input_constant: file.input_constant,
    })
}

pub fn save_model(bundle: &ModelBundle, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(bundle)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelBundle> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| LpnnError::Data(format!("cannot read model {}: {e}", path.display())))?;
    model_from_json(&text)
}

#[derive(Debug, Serialize, Deserialize)]
struct CoreDto {
    dims: [usize; 3],
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TtFile {
    format: String,
    version: u32,
    cores: Vec<CoreDto>,
}

/// Row-major cores, each with an explicit `dims` header `[out, input, in]`.
pub fn tt_to_json(cores: &[TTCore]) -> Result<String> {
    let file = TtFile {
        format: TT_FORMAT.into(),
        version: FORMAT_VERSION,
        cores: cores
            .iter()
            .map(|c| CoreDto {
                dims: c.dims(),
                data: c.g.iter().copied().collect(),
            })
            .collect(),
    };
    Ok(serde_json::to_string_pretty(&file)?)
}

pub fn tt_from_json(text: &str) -> Result<Vec<TTCore>> {
    let file: TtFile = parse(text, "tensor-train")?;
    check_header(&file.format, file.version, TT_FORMAT)?;
    file.cores
        .into_iter()
        .enumerate()
        .map(|(k, c)| {
            let [a, b, d] = c.dims;
            Array3::from_shape_vec((a, b, d), c.data)
                .map(|g| TTCore { g })
                .map_err(|e| LpnnError::Data(format!("core {k}: {e}")))
        })
        .collect()
}
