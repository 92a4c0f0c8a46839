//! Extract/filter explanations of dense layers.
//!
//! Each layer is compared with its benchmark form, the same layer with every
//! bias-augmented weight row scaled to unit length. A neuron's degree is the
//! gap between its real response and the projection onto its unit row:
//! positive means the neuron extracts along its weight direction, negative
//! means it filters. Degrees move the layer input along the raw weight rows,
//! and the movement is handed down layer by layer until it reaches the
//! network's input space.
//!
//! The projection form of the degree, `v1·v2 - v1·(v2/|v2|)`, drops the
//! activation; the neuron form used here keeps it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Activation, ActivationTrace, DenseLayer, DenseNet};

/// Row-normalised, bias-augmented copy of a layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkLayer {
    /// Rows of `[w_i | b_i] / |[w_i | b_i]|`; all-zero for degenerate rows.
    pub unit_weights: Vec<Vec<f64>>,
    pub row_norms: Vec<f64>,
    pub degenerate: Vec<bool>,
}

impl BenchmarkLayer {
    pub fn from_layer(layer: &DenseLayer) -> Self {
        let mut unit_weights = Vec::with_capacity(layer.out_dim());
        let mut row_norms = Vec::with_capacity(layer.out_dim());
        let mut degenerate = Vec::with_capacity(layer.out_dim());
        for i in 0..layer.out_dim() {
            let mut row = layer.row(i).to_vec();
            row.push(layer.bias()[i]);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
            unit_weights.push(row);
            row_norms.push(norm);
            degenerate.push(norm == 0.0);
        }
        Self {
            unit_weights,
            row_norms,
            degenerate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extraction {
    Extracted,
    Filtered,
    Unchanged,
}

pub fn classify_degree(degree: f64) -> Extraction {
    if degree > 0.0 {
        Extraction::Extracted
    } else if degree < 0.0 {
        Extraction::Filtered
    } else {
        Extraction::Unchanged
    }
}

/// Degree of a single neuron, `σ(x̃·w̃) - x̃·w̃/|w̃|`, where `x̃ = x ⊕ 1` and
/// `w̃ = w ⊕ b`.
pub fn neuron_degree(x: &[f64], w: &[f64], bias: f64, activation: Activation) -> Result<f64> {
    if x.len() != w.len() {
        return Err(Error::DimensionMismatch {
            context: "neuron input",
            expected: w.len(),
            found: x.len(),
        });
    }
    let norm = (w.iter().map(|v| v * v).sum::<f64>() + bias * bias).sqrt();
    if norm == 0.0 {
        return Err(Error::DegenerateNeuron { neuron: 0 });
    }
    let z = x.iter().zip(w).fold(bias, |acc, (a, b)| acc + a * b);
    let response = activation.apply(&[z])[0];
    Ok(response - z / norm)
}

/// Degrees of every neuron in `layer` for input `x`. Softmax layers use the
/// layer-wide softmax as each neuron's response. Degenerate neurons get 0.
pub fn layer_degrees(x: &[f64], layer: &DenseLayer) -> Result<(Vec<f64>, Vec<bool>)> {
    if x.len() != layer.in_dim() {
        return Err(Error::DimensionMismatch {
            context: "layer input",
            expected: layer.in_dim(),
            found: x.len(),
        });
    }
    let bench = BenchmarkLayer::from_layer(layer);
    let z = layer.pre_activation(x);
    let a = layer.activation.apply(&z);
    let degrees = (0..layer.out_dim())
        .map(|i| {
            if bench.degenerate[i] {
                0.0
            } else {
                a[i] - z[i] / bench.row_norms[i]
            }
        })
        .collect();
    Ok((degrees, bench.degenerate))
}

/// `x + (ε/n) Σ c_i w_i` over the non-degenerate rows, `w_i` being raw weight rows.
fn pull_back(
    x: &[f64],
    layer: &DenseLayer,
    coefficients: &[f64],
    degenerate: &[bool],
    epsilon: f64,
    layer_index: usize,
) -> Result<Vec<f64>> {
    let active = degenerate.iter().filter(|d| !**d).count();
    if active == 0 {
        return Err(Error::EmptyLayer { layer: layer_index });
    }
    let scale = epsilon / active as f64;
    let mut moved = vec![0.0; x.len()];
    for (i, &c) in coefficients.iter().enumerate() {
        if degenerate[i] {
            continue;
        }
        for (m, &w) in moved.iter_mut().zip(layer.row(i)) {
            *m += c * w;
        }
    }
    Ok(x.iter().zip(&moved).map(|(v, m)| v + scale * m).collect())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !epsilon.is_finite() || epsilon < 0.0 {
        return Err(Error::invalid(format!("epsilon must be finite and non-negative, got {epsilon}")));
    }
    Ok(())
}

/// Single-layer transformation: the mean over neurons of `x + ε·deg_i·w_i`.
pub fn layer_transform(x: &[f64], layer: &DenseLayer, epsilon: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    check_epsilon(epsilon)?;
    let (degrees, degenerate) = layer_degrees(x, layer)?;
    let x_prime = pull_back(x, layer, &degrees, &degenerate, epsilon, 0)?;
    Ok((x_prime, degrees))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTransform {
    pub layer_index: usize,
    /// Layer input recorded in the forward pass.
    pub x: Vec<f64>,
    pub degrees: Vec<f64>,
    pub degenerate: Vec<bool>,
    /// Output-space movement handed down from the layer above.
    pub incoming_delta: Vec<f64>,
    pub x_prime: Vec<f64>,
}

/// Full explanation of one sample, layers in forward order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformationRecord {
    pub per_layer: Vec<LayerTransform>,
    pub input: Vec<f64>,
    pub input_space_x_prime: Vec<f64>,
    pub epsilon: f64,
}

impl TransformationRecord {
    /// `x' - x` in the network's input space.
    pub fn input_delta(&self) -> Vec<f64> {
        self.input_space_x_prime
            .iter()
            .zip(&self.input)
            .map(|(a, b)| a - b)
            .collect()
    }

    pub fn to_export(&self, sample_id: usize, model_hash: &str) -> RecordExport {
        RecordExport {
            sample_id,
            model_hash: model_hash.to_string(),
            epsilon: self.epsilon,
            record: self.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordExport {
    pub sample_id: usize,
    pub model_hash: String,
    pub epsilon: f64,
    pub record: TransformationRecord,
}

/// Walks the layers from output to input. Each layer combines its own degrees
/// with the delta handed down from above, `c_i = deg_i + Δ_i`, moves its
/// recorded input to `x' = a + (ε/n) Σ c_i w_i`, and hands `x' - a` to the
/// layer below.
pub fn explain(net: &DenseNet, trace: &ActivationTrace, epsilon: f64) -> Result<TransformationRecord> {
    check_epsilon(epsilon)?;
    let layers = net.layers();
    if trace.per_layer_inputs.len() != layers.len() {
        return Err(Error::invalid(format!(
            "trace records {} layers but the network has {}",
            trace.per_layer_inputs.len(),
            layers.len()
        )));
    }
    for (l, (layer, input)) in layers.iter().zip(&trace.per_layer_inputs).enumerate() {
        if input.len() != layer.in_dim() {
            return Err(Error::invalid(format!(
                "trace input of layer {l} has {} values, layer expects {}",
                input.len(),
                layer.in_dim()
            )));
        }
    }

    let mut delta = vec![0.0; net.output_dim()];
    let mut per_layer = Vec::with_capacity(layers.len());
    for (l, layer) in layers.iter().enumerate().rev() {
        let x = &trace.per_layer_inputs[l];
        let (degrees, degenerate) = layer_degrees(x, layer)?;
        let coefficients: Vec<f64> = degrees.iter().zip(&delta).map(|(d, dl)| d + dl).collect();
        let x_prime = pull_back(x, layer, &coefficients, &degenerate, epsilon, l)?;
        let next_delta = x_prime.iter().zip(x).map(|(a, b)| a - b).collect();
        per_layer.push(LayerTransform {
            layer_index: l,
            x: x.clone(),
            degrees,
            degenerate,
            incoming_delta: std::mem::replace(&mut delta, next_delta),
            x_prime,
        });
    }
    per_layer.reverse();
    let input_space_x_prime = per_layer[0].x_prime.clone();
    Ok(TransformationRecord {
        input: trace.per_layer_inputs[0].clone(),
        per_layer,
        input_space_x_prime,
        epsilon,
    })
}

/// Convenience: forward pass followed by [`explain`].
pub fn explain_sample(net: &DenseNet, x: &[f64], epsilon: f64) -> Result<TransformationRecord> {
    explain(net, &net.forward_traced(x)?, epsilon)
}

/// Non-negative per-feature scores with a descending ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMap {
    pub scores: Vec<f64>,
    /// Feature indices by descending score; ties keep the lower index first.
    pub ranking: Vec<usize>,
}

impl AttributionMap {
    pub fn from_scores(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::invalid("attribution scores must be finite and non-negative"));
        }
        let mut ranking: Vec<usize> = (0..scores.len()).collect();
        ranking.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        Ok(Self { scores, ranking })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Importance of input feature `j` is `|x'_j - x_j|`.
pub fn attribution_from_transform(record: &TransformationRecord) -> AttributionMap {
    let scores = record.input_delta().into_iter().map(f64::abs).collect();
    AttributionMap::from_scores(scores).expect("absolute deltas of finite records are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_rows_layer(activation: Activation) -> DenseLayer {
        // rows of [w | b] already have unit norm
        let s = 0.5f64;
        DenseLayer::from_rows(&[vec![s, s, s], vec![0.6, 0.0, -0.8]], vec![s, 0.0], activation).unwrap()
    }

    #[test]
    fn benchmark_rows_have_unit_norm() {
        let layer = DenseLayer::from_rows(&[vec![3.0, 0.0], vec![0.0, 0.0], vec![1.0, -2.0]], vec![4.0, 0.0, 2.0], Activation::Relu)
            .unwrap();
        let b = BenchmarkLayer::from_layer(&layer);
        assert_eq!(b.row_norms[0], 5.0);
        assert_eq!(b.degenerate, vec![false, true, false]);
        for (i, row) in b.unit_weights.iter().enumerate() {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !b.degenerate[i] {
                assert!((n - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn unit_weights_are_a_fixed_point() {
        // |w̃| = 1, ReLU, x̃·w̃ = 0.5
        let d = neuron_degree(&[0.5, 0.5, 0.0], &[0.5, 0.5, 0.5], 0.5, Activation::Relu).unwrap();
        assert!(d.abs() < 1e-15);
    }

    #[test]
    fn orthogonal_input_has_zero_degree() {
        let d = neuron_degree(&[1.0, -1.0], &[1.0, 1.0], 0.0, Activation::Relu).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn degree_sign_convention() {
        // |w̃| = 2, identity, x̃·w̃ = 1 → deg = 1 - 0.5
        let d = neuron_degree(&[0.5, 0.0], &[2.0, 0.0], 0.0, Activation::Identity).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        assert_eq!(classify_degree(d), Extraction::Extracted);
        // |w̃| = 0.5, identity, x̃·w̃ = 0.5 → deg = 0.5 - 1
        let d = neuron_degree(&[1.0], &[0.5], 0.0, Activation::Identity).unwrap();
        assert!((d + 0.5).abs() < 1e-15);
        assert_eq!(classify_degree(d), Extraction::Filtered);
    }

    #[test]
    fn zero_norm_neuron_is_degenerate() {
        assert!(matches!(
            neuron_degree(&[1.0, 2.0], &[0.0, 0.0], 0.0, Activation::Relu),
            Err(Error::DegenerateNeuron { .. })
        ));
    }

    #[test]
    fn identity_benchmark_layer_has_zero_degrees() {
        let layer = unit_rows_layer(Activation::Identity);
        let (degrees, _) = layer_degrees(&[0.3, -1.2, 2.0], &layer).unwrap();
        assert!(degrees.iter().all(|d| d.abs() < 1e-15));
        let (x_prime, _) = layer_transform(&[0.3, -1.2, 2.0], &layer, 5.0).unwrap();
        assert!(x_prime.iter().zip([0.3, -1.2, 2.0]).all(|(a, b)| (a - b).abs() < 1e-14));
    }

    #[test]
    fn single_neuron_moves_along_its_row() {
        // w = e_1, b = 0 gives |w̃| = 1, so use identity with norm 2 to get deg = d
        let layer = DenseLayer::from_rows(&[vec![2.0, 0.0]], vec![0.0], Activation::Identity).unwrap();
        let x = [1.0, 3.0];
        let (degrees, _) = layer_degrees(&x, &layer).unwrap();
        let d = degrees[0];
        assert!((d - 1.0).abs() < 1e-15); // 2 - 2/2
        let (x_prime, _) = layer_transform(&x, &layer, 1.0).unwrap();
        assert!((x_prime[0] - (1.0 + d * 2.0)).abs() < 1e-15);
        assert_eq!(x_prime[1], 3.0);
    }

    #[test]
    fn all_degenerate_layer_is_empty() {
        let layer = DenseLayer::from_rows(&[vec![0.0, 0.0]], vec![0.0], Activation::Relu).unwrap();
        assert!(matches!(layer_transform(&[1.0, 1.0], &layer, 1.0), Err(Error::EmptyLayer { .. })));
    }

    #[test]
    fn degenerate_rows_do_not_count_in_the_mean() {
        let layer = DenseLayer::from_rows(&[vec![2.0, 0.0], vec![0.0, 0.0]], vec![0.0, 0.0], Activation::Identity).unwrap();
        let (x_prime, degrees) = layer_transform(&[1.0, 3.0], &layer, 1.0).unwrap();
        assert_eq!(degrees[1], 0.0);
        assert!((x_prime[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_epsilon_is_identity_everywhere() {
        let net = DenseNet::init(5, 3, &crate::nn::Architecture::default(), 3).unwrap();
        let x = [0.5, -1.0, 2.0, 0.0, 1.5];
        let rec = explain_sample(&net, &x, 0.0).unwrap();
        for lt in &rec.per_layer {
            assert_eq!(lt.x, lt.x_prime);
        }
        assert_eq!(rec.input_space_x_prime, x.to_vec());
        let attr = attribution_from_transform(&rec);
        assert!(attr.scores.iter().all(|&s| s == 0.0));
        assert_eq!(attr.ranking, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn rejects_bad_epsilon_and_mismatched_trace() {
        let net = DenseNet::init(3, 2, &crate::nn::Architecture::default(), 3).unwrap();
        let trace = net.forward_traced(&[1.0, 2.0, 3.0]).unwrap();
        assert!(explain(&net, &trace, -1.0).is_err());
        assert!(explain(&net, &trace, f64::NAN).is_err());
        let other = DenseNet::init(4, 2, &crate::nn::Architecture::default(), 3).unwrap();
        assert!(explain(&other, &trace, 1.0).is_err());
    }

    #[test]
    fn one_moved_feature_ranks_first() {
        let rec = TransformationRecord {
            per_layer: vec![],
            input: vec![1.0, 1.0, 1.0],
            input_space_x_prime: vec![1.0, 0.2, 1.0],
            epsilon: 1.0,
        };
        let attr = attribution_from_transform(&rec);
        assert_eq!(attr.ranking[0], 1);
        assert_eq!(attr.ranking[1..], [0, 2]);
    }

    #[test]
    fn attribution_rejects_negative_scores() {
        assert!(AttributionMap::from_scores(vec![1.0, -0.1]).is_err());
        let a = AttributionMap::from_scores(vec![1.0, 3.0, 3.0, 0.0]).unwrap();
        assert_eq!(a.ranking, vec![1, 2, 0, 3]);
    }
}
