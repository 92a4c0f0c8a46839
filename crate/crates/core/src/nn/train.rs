use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Activation, Architecture, DenseNet, LabeledDataset};
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// Full-dataset cross-entropy after each epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
}

/// Per-layer parameter gradients, laid out like the layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(net: &DenseNet) -> Self {
        Self {
            weights: net.layers().iter().map(|l| vec![0.0; l.weights().len()]).collect(),
            bias: net.layers().iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Mean cross-entropy of the listed rows and its exact gradient.
///
/// Probabilities are the softmax output of the last layer when it is a softmax
/// layer, otherwise the softmax of the last layer's output.
pub fn loss_and_gradient(net: &DenseNet, data: &LabeledDataset, rows: &[usize]) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros(net);
    let mut loss = 0.0;
    let layers = net.layers();
    let last = layers.len() - 1;
    for &r in rows {
        let x = &data.samples()[r];
        let y = data.labels()[r];
        let trace = net.forward_traced(x)?;

        let z_last = &trace.per_layer_pre_activations[last];
        let a_last = &trace.per_layer_outputs[last];
        let scores = if layers[last].activation == Activation::Softmax {
            z_last
        } else {
            a_last
        };
        loss += log_sum_exp(scores) - scores[y];
        let probs = super::softmax(scores);
        let mut delta: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| p - if i == y { 1.0 } else { 0.0 })
            .collect();
        if layers[last].activation != Activation::Softmax {
            for (i, d) in delta.iter_mut().enumerate() {
                *d *= layers[last].activation.derivative(z_last[i], a_last[i]);
            }
        }

        for l in (0..=last).rev() {
            let layer = &layers[l];
            let input = &trace.per_layer_inputs[l];
            let cols = layer.in_dim();
            for (i, &d) in delta.iter().enumerate() {
                grads.bias[l][i] += d;
                let row = &mut grads.weights[l][i * cols..(i + 1) * cols];
                for (g, &v) in row.iter_mut().zip(input) {
                    *g += d * v;
                }
            }
            if l > 0 {
                let prev = &layers[l - 1];
                let z = &trace.per_layer_pre_activations[l - 1];
                let a = &trace.per_layer_outputs[l - 1];
                let mut back = vec![0.0; cols];
                for (i, &d) in delta.iter().enumerate() {
                    for (b, &w) in back.iter_mut().zip(layer.row(i)) {
                        *b += d * w;
                    }
                }
                delta = back
                    .iter()
                    .enumerate()
                    .map(|(j, b)| b * prev.activation.derivative(z[j], a[j]))
                    .collect();
            }
        }
    }
    let scale = 1.0 / rows.len().max(1) as f64;
    for g in grads.weights.iter_mut().chain(grads.bias.iter_mut()) {
        g.iter_mut().for_each(|v| *v *= scale);
    }
    Ok((loss * scale, grads))
}

fn full_loss(net: &DenseNet, data: &LabeledDataset) -> Result<f64> {
    let last = net.layers().len() - 1;
    let mut total = 0.0;
    for (x, &y) in data.samples().iter().zip(data.labels()) {
        let t = net.forward_traced(x)?;
        let scores = if net.output_activation() == Activation::Softmax {
            &t.per_layer_pre_activations[last]
        } else {
            &t.logits
        };
        total += log_sum_exp(scores) - scores[y];
    }
    Ok(total / data.len() as f64)
}

pub fn accuracy(net: &DenseNet, data: &LabeledDataset) -> Result<f64> {
    let mut correct = 0usize;
    for (x, &y) in data.samples().iter().zip(data.labels()) {
        if net.predict(x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Architecture, optimiser settings and init seed: everything needed to fit
/// a fresh network to a dataset reproducibly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trainer {
    #[serde(default)]
    pub architecture: Architecture,
    #[serde(default)]
    pub config: TrainConfig,
    #[serde(default)]
    pub init_seed: u64,
}

impl Trainer {
    fn fresh(&self, data: &LabeledDataset) -> Result<DenseNet> {
        DenseNet::init(data.feature_count(), data.class_count(), &self.architecture, self.init_seed)
    }

    pub fn fit(&self, data: &LabeledDataset) -> Result<DenseNet> {
        train(&self.fresh(data)?, data, &self.config)
    }

    /// Fits on `train` and records accuracy on `test` after every epoch.
    pub fn fit_tracking(&self, train: &LabeledDataset, test: &LabeledDataset) -> Result<(DenseNet, Vec<f64>)> {
        let mut curve = Vec::with_capacity(self.config.epochs);
        let (net, _) = train_with(&self.fresh(train)?, train, &self.config, |_, net| {
            curve.push(accuracy(net, test)?);
            Ok(())
        })?;
        Ok((net, curve))
    }
}

/// Mini-batch SGD. See [`train_with`] for per-epoch observation.
pub fn train(net: &DenseNet, data: &LabeledDataset, config: &TrainConfig) -> Result<DenseNet> {
    train_with(net, data, config, |_, _| Ok(())).map(|(net, _)| net)
}

/// Mini-batch SGD with a fixed, seeded shuffle order. `on_epoch` sees the
/// 1-based epoch number and the network after that epoch.
pub fn train_with<F>(
    net: &DenseNet,
    data: &LabeledDataset,
    config: &TrainConfig,
    mut on_epoch: F,
) -> Result<(DenseNet, TrainReport)>
where
    F: FnMut(usize, &DenseNet) -> Result<()>,
{
    if data.feature_count() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            context: "training data features",
            expected: net.input_dim(),
            found: data.feature_count(),
        });
    }
    if data.class_count() > net.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "training data classes",
            expected: net.output_dim(),
            found: data.class_count(),
        });
    }
    if config.batch_size == 0 || !(config.learning_rate.is_finite() && config.learning_rate > 0.0) {
        return Err(Error::invalid("batch size and learning rate must be positive"));
    }
    let mut net = net.clone();
    let mut report = TrainReport::default();
    let mut rng = seed::rng(config.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_size) {
            let (loss, grads) = loss_and_gradient(&net, data, batch)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch });
            }
            for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                for (w, g) in layer.weights_mut().iter_mut().zip(&grads.weights[l]) {
                    *w -= config.learning_rate * g;
                }
                for (b, g) in layer.bias_mut().iter_mut().zip(&grads.bias[l]) {
                    *b -= config.learning_rate * g;
                }
            }
        }
        let loss = full_loss(&net, data)?;
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        report.epoch_losses.push(loss);
        on_epoch(epoch, &net)?;
    }
    Ok((net, report))
}
