//! JSON checkpoints holding the network and its input standardization.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::mlp::{BatchNorm, Dense, HiddenLayer, ModelParams};
use super::{Classifier, ModelError};
use crate::dataset::Standardizer;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Architecture {
    input_dim: usize,
    hidden: Vec<usize>,
    output_dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
    gamma: Vec<f64>,
    beta: Vec<f64>,
    running_mean: Vec<f64>,
    running_var: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OutputDoc {
    weight: Vec<Vec<f64>>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointDoc {
    format_version: u32,
    architecture: Architecture,
    leaky_slope: f64,
    standardizer: Standardizer,
    layers: Vec<LayerDoc>,
    output: OutputDoc,
}

fn nested(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: Vec<Vec<f64>>, shape: (usize, usize), what: &str) -> Result<Array2<f64>, ModelError> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(ModelError::Shape(format!("{what}: expected {}x{}", shape.0, shape.1)));
    }
    Ok(Array2::from_shape_vec(shape, rows.into_iter().flatten().collect()).expect("shape checked"))
}

fn vector(v: Vec<f64>, n: usize, what: &str) -> Result<Array1<f64>, ModelError> {
    if v.len() != n {
        return Err(ModelError::Shape(format!("{what}: expected {n} values, found {}", v.len())));
    }
    Ok(Array1::from(v))
}

impl From<&Classifier> for CheckpointDoc {
    fn from(c: &Classifier) -> Self {
        let p = &c.params;
        let sizes = p.layer_sizes();
        Self {
            format_version: CHECKPOINT_VERSION,
            architecture: Architecture {
                input_dim: p.input_dim,
                hidden: sizes[1..sizes.len() - 1].to_vec(),
                output_dim: *sizes.last().expect("non-empty"),
            },
            leaky_slope: p.leaky_slope,
            standardizer: c.standardizer.clone(),
            layers: p
                .hidden
                .iter()
                .map(|h| LayerDoc {
                    weight: nested(&h.dense.weight),
                    bias: h.dense.bias.to_vec(),
                    gamma: h.norm.gamma.to_vec(),
                    beta: h.norm.beta.to_vec(),
                    running_mean: h.norm.running_mean.to_vec(),
                    running_var: h.norm.running_var.to_vec(),
                })
                .collect(),
            output: OutputDoc {
                weight: nested(&p.output.weight),
                bias: p.output.bias.to_vec(),
            },
        }
    }
}

impl TryFrom<CheckpointDoc> for Classifier {
    type Error = ModelError;

    fn try_from(doc: CheckpointDoc) -> Result<Self, ModelError> {
        if doc.format_version != CHECKPOINT_VERSION {
            return Err(ModelError::Version {
                found: doc.format_version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let arch = &doc.architecture;
        if arch.hidden.len() != doc.layers.len() {
            return Err(ModelError::Shape(format!(
                "architecture lists {} hidden layers, found {}",
                arch.hidden.len(),
                doc.layers.len()
            )));
        }
        let mut prev = arch.input_dim;
        let mut hidden = Vec::with_capacity(doc.layers.len());
        for (i, (layer, &n)) in doc.layers.into_iter().zip(&arch.hidden).enumerate() {
            let tag = |t: &str| format!("layer {i} {t}");
            hidden.push(HiddenLayer {
                dense: Dense {
                    weight: matrix(layer.weight, (prev, n), &tag("weight"))?,
                    bias: vector(layer.bias, n, &tag("bias"))?,
                },
                norm: BatchNorm {
                    gamma: vector(layer.gamma, n, &tag("gamma"))?,
                    beta: vector(layer.beta, n, &tag("beta"))?,
                    running_mean: vector(layer.running_mean, n, &tag("running_mean"))?,
                    running_var: vector(layer.running_var, n, &tag("running_var"))?,
                },
            });
            prev = n;
        }
        let params = ModelParams {
            input_dim: arch.input_dim,
            hidden,
            output: Dense {
                weight: matrix(doc.output.weight, (prev, arch.output_dim), "output weight")?,
                bias: vector(doc.output.bias, arch.output_dim, "output bias")?,
            },
            leaky_slope: doc.leaky_slope,
        };
        Classifier::new(doc.standardizer, params)
    }
}

pub fn save_checkpoint(classifier: &Classifier, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let text = serde_json::to_string(&CheckpointDoc::from(classifier)).map_err(|e| ModelError::Parse {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    fs::write(path, text).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Classifier, ModelError> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: shown.clone(),
        source,
    })?;
    let doc: CheckpointDoc = serde_json::from_str(&text).map_err(|e| ModelError::Parse {
        path: shown,
        reason: e.to_string(),
    })?;
    Classifier::try_from(doc)
}
