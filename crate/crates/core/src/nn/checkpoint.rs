use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Activation, DenseLayer, DenseNet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRecord {
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
    /// Row-major, `rows * cols` values.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// On-disk form of a [`DenseNet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub layers: Vec<LayerRecord>,
}

impl From<&DenseNet> for Checkpoint {
    fn from(net: &DenseNet) -> Self {
        let layers = net
            .layers()
            .iter()
            .map(|l| LayerRecord {
                rows: l.out_dim(),
                cols: l.in_dim(),
                activation: l.activation,
                weights: l.weights().to_vec(),
                bias: l.bias().to_vec(),
            })
            .collect();
        Checkpoint { layers }
    }
}

impl Checkpoint {
    pub fn into_net(self) -> Result<DenseNet> {
        let input_dim = self
            .layers
            .first()
            .map(|l| l.cols)
            .ok_or_else(|| Error::Shape("checkpoint declares no layers".into()))?;
        let layers = self
            .layers
            .into_iter()
            .enumerate()
            .map(|(i, r)| {
                if r.weights.len() != r.rows * r.cols {
                    return Err(Error::Shape(format!(
                        "layers[{i}].weights has {} values, declared shape {}x{} needs {}",
                        r.weights.len(),
                        r.rows,
                        r.cols,
                        r.rows * r.cols
                    )));
                }
                if r.bias.len() != r.rows {
                    return Err(Error::Shape(format!(
                        "layers[{i}].bias has {} values, declared rows = {}",
                        r.bias.len(),
                        r.rows
                    )));
                }
                DenseLayer::new(r.rows, r.cols, r.weights, r.bias, r.activation)
            })
            .collect::<Result<Vec<_>>>()?;
        DenseNet::new(input_dim, layers)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })
    }
}

/// Writes the network as JSON. Floats use the shortest representation that
/// reads back to the identical bit pattern.
pub fn save_checkpoint(net: &DenseNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, Checkpoint::from(net).to_json()).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<DenseNet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)?.into_net()
}

/// SHA-256 of the checkpoint JSON, hex encoded.
pub fn model_hash(net: &DenseNet) -> String {
    hex::encode(Sha256::digest(Checkpoint::from(net).to_json().as_bytes()))
}
