//! Minimal dense-network engine: construction, forward passes with full
//! activation capture, deterministic SGD training and JSON checkpoints.

mod checkpoint;
mod dataset;
mod layer;
mod train;

use rand_distr::{Distribution, Uniform};

pub use checkpoint::{load_checkpoint, model_hash, save_checkpoint, Checkpoint, LayerRecord};
pub use dataset::LabeledDataset;
pub use layer::{argmax, sigmoid, softmax, Activation, DenseLayer};
pub use train::{accuracy, loss_and_gradient, train, train_with, Gradients, TrainConfig, TrainReport, Trainer};

use crate::error::{Error, Result};
use crate::seed;

/// Ordered stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    input_dim: usize,
    layers: Vec<DenseLayer>,
}

/// Every layer's input and output for a single forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    pub per_layer_inputs: Vec<Vec<f64>>,
    pub per_layer_pre_activations: Vec<Vec<f64>>,
    pub per_layer_outputs: Vec<Vec<f64>>,
    pub logits: Vec<f64>,
    pub predicted_class: usize,
}

impl ActivationTrace {
    /// Class probabilities: the final output if it is already a softmax,
    /// otherwise the softmax of the final output.
    pub fn probabilities(&self, net: &DenseNet) -> Vec<f64> {
        if net.output_activation() == Activation::Softmax {
            self.logits.clone()
        } else {
            softmax(&self.logits)
        }
    }
}

/// Shape of a freshly initialised classifier.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct Architecture {
    pub hidden: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            hidden_activation: Activation::Relu,
            output_activation: Activation::Softmax,
        }
    }
}

impl DenseNet {
    pub fn new(input_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        let mut expected = input_dim;
        for (i, layer) in layers.iter().enumerate() {
            if layer.in_dim() != expected {
                return Err(Error::Shape(format!(
                    "layer {i} expects {} inputs but receives {expected}",
                    layer.in_dim()
                )));
            }
            if layer.activation == Activation::Softmax && i + 1 != layers.len() {
                return Err(Error::Shape(format!(
                    "softmax is only allowed on the final layer, found on layer {i}"
                )));
            }
            expected = layer.out_dim();
        }
        Ok(Self { input_dim, layers })
    }

    /// Glorot-uniform initialisation, `U(-a, a)` with `a = sqrt(6 / (in + out))`, biases zero.
    pub fn init(input_dim: usize, classes: usize, arch: &Architecture, seed: u64) -> Result<Self> {
        if input_dim == 0 || classes == 0 {
            return Err(Error::invalid("input and output dimensions must be positive"));
        }
        let mut rng = seed::rng(seed);
        let mut dims = vec![input_dim];
        dims.extend(&arch.hidden);
        dims.push(classes);
        let last = dims.len() - 2;
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let dist = Uniform::new_inclusive(-a, a);
                let weights = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
                let act = if i == last {
                    arch.output_activation
                } else {
                    arch.hidden_activation
                };
                DenseLayer::new(fan_out, fan_in, weights, vec![0.0; fan_out], act)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(input_dim, layers)
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::out_dim)
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn output_activation(&self) -> Activation {
        self.layers.last().expect("non-empty").activation
    }

    pub fn forward_traced(&self, x: &[f64]) -> Result<ActivationTrace> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "forward input",
                expected: self.input_dim,
                found: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("forward input contains non-finite values"));
        }
        let n = self.layers.len();
        let mut inputs = Vec::with_capacity(n);
        let mut pre = Vec::with_capacity(n);
        let mut outputs: Vec<Vec<f64>> = Vec::with_capacity(n);
        let mut current = x.to_vec();
        for layer in &self.layers {
            let z = layer.pre_activation(&current);
            let a = layer.activation.apply(&z);
            inputs.push(current);
            pre.push(z);
            current = a.clone();
            outputs.push(a);
        }
        let predicted_class = argmax(&current);
        Ok(ActivationTrace {
            per_layer_inputs: inputs,
            per_layer_pre_activations: pre,
            per_layer_outputs: outputs,
            logits: current,
            predicted_class,
        })
    }

    /// Forward pass without keeping intermediate activations.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "forward input",
                expected: self.input_dim,
                found: x.len(),
            });
        }
        Ok(self.layers.iter().fold(x.to_vec(), |acc, l| l.forward(&acc)))
    }

    pub fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        let out = self.forward(x)?;
        Ok(if self.output_activation() == Activation::Softmax {
            out
        } else {
            softmax(&out)
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }
}
