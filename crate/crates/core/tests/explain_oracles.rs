use freqx::data::{generate_synthetic, SyntheticSpec};
use freqx::explain::{
    attribution_from_transform, explain, explain_sample, layer_transform, neuron_degree,
};
use freqx::nn::{accuracy, train, Activation, Architecture, DenseLayer, DenseNet, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_layer(rng: &mut ChaCha8Rng, rows: usize, cols: usize, act: Activation) -> DenseLayer {
    let w = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = (0..rows).map(|_| rng.gen_range(-0.5..0.5)).collect();
    DenseLayer::new(rows, cols, w, b, act).unwrap()
}

fn vector(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()
}

/// relu(x·w + b) - (x·w + b) / sqrt(|w|² + b²), written out longhand.
fn scalar_degree(x: &[f64], w: &[f64], b: f64) -> f64 {
    let mut z = b;
    let mut sq = b * b;
    for t in 0..x.len() {
        z += x[t] * w[t];
        sq += w[t] * w[t];
    }
    let relu = if z > 0.0 { z } else { 0.0 };
    relu - z / sq.sqrt()
}

#[test]
fn degree_matches_scalar_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..500 {
        let n = rng.gen_range(1..20);
        let x = vector(&mut rng, n);
        let w = vector(&mut rng, n);
        let b = rng.gen_range(-1.0..1.0);
        let got = neuron_degree(&x, &w, b, Activation::Relu).unwrap();
        assert!((got - scalar_degree(&x, &w, b)).abs() <= 1e-12);
    }
}

#[test]
fn mean_of_per_neuron_moves_equals_summed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let (rows, cols) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let layer = random_layer(&mut rng, rows, cols, Activation::Relu);
        let x = vector(&mut rng, cols);
        let (x_prime, degrees) = layer_transform(&x, &layer, 1.0).unwrap();
        let mut mean = vec![0.0; cols];
        for i in 0..rows {
            let w = &layer.weights()[i * cols..(i + 1) * cols];
            let d = scalar_degree(&x, w, layer.bias()[i]);
            assert!((d - degrees[i]).abs() <= 1e-12);
            for j in 0..cols {
                mean[j] += (x[j] + d * w[j]) / rows as f64;
            }
        }
        for (a, b) in x_prime.iter().zip(&mean) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn single_layer_net_matches_layer_transform() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let layer = random_layer(&mut rng, 5, 7, Activation::Relu);
    let net = DenseNet::new(7, vec![layer.clone()]).unwrap();
    let x = vector(&mut rng, 7);
    let record = explain_sample(&net, &x, 3.0).unwrap();
    let (x_prime, degrees) = layer_transform(&x, &layer, 3.0).unwrap();
    assert_eq!(record.input_space_x_prime, x_prime);
    assert_eq!(record.per_layer[0].degrees, degrees);
}

#[test]
fn zero_degree_top_layer_passes_nothing_down() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let first = random_layer(&mut rng, 4, 6, Activation::Relu);
    // Identity rows with unit augmented norm have zero degree everywhere.
    let s = 0.5f64.sqrt();
    let top = DenseLayer::new(2, 4, vec![s, 0.0, 0.0, 0.0, 0.0, 0.0, s, 0.0], vec![s, s], Activation::Identity).unwrap();
    let net = DenseNet::new(6, vec![first.clone(), top]).unwrap();
    let x = vector(&mut rng, 6);
    let record = explain_sample(&net, &x, 2.0).unwrap();
    assert!(record.per_layer[1].degrees.iter().all(|d| d.abs() < 1e-15));
    let (expected, _) = layer_transform(&x, &first, 2.0).unwrap();
    for (a, b) in record.input_space_x_prime.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-14);
    }
}

/// Independent restatement of the output-to-input chaining rule.
fn chained_oracle(net: &DenseNet, x: &[f64], eps: f64) -> Vec<f64> {
    let mut inputs = vec![x.to_vec()];
    for layer in net.layers() {
        let a = inputs.last().unwrap();
        let out: Vec<f64> = (0..layer.out_dim())
            .map(|i| {
                let z: f64 = layer.bias()[i] + (0..layer.in_dim()).map(|j| layer.weights()[i * layer.in_dim() + j] * a[j]).sum::<f64>();
                z.max(0.0)
            })
            .collect();
        inputs.push(out);
    }
    let mut delta = vec![0.0; net.output_dim()];
    let mut moved = Vec::new();
    for (l, layer) in net.layers().iter().enumerate().rev() {
        let a = &inputs[l];
        let cols = layer.in_dim();
        let mut step = vec![0.0; cols];
        for i in 0..layer.out_dim() {
            let w = &layer.weights()[i * cols..(i + 1) * cols];
            let c = scalar_degree(a, w, layer.bias()[i]) + delta[i];
            for j in 0..cols {
                step[j] += c * w[j];
            }
        }
        moved = (0..cols).map(|j| a[j] + eps / layer.out_dim() as f64 * step[j]).collect();
        delta = (0..cols).map(|j| moved[j] - a[j]).collect();
    }
    moved
}

#[test]
fn three_layer_chaining_matches_step_by_step_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let dims = [rng.gen_range(2..10), rng.gen_range(2..10), rng.gen_range(2..10), rng.gen_range(2..6)];
        let layers = (0..3).map(|l| random_layer(&mut rng, dims[l + 1], dims[l], Activation::Relu)).collect();
        let net = DenseNet::new(dims[0], layers).unwrap();
        let x = vector(&mut rng, dims[0]);
        let eps = rng.gen_range(0.1..3.0);
        let record = explain(&net, &net.forward_traced(&x).unwrap(), eps).unwrap();
        let expected = chained_oracle(&net, &x, eps);
        for (a, b) in record.input_space_x_prime.iter().zip(&expected) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}

#[test]
fn ranking_is_invariant_to_epsilon_scale_for_a_single_layer() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..50 {
        let cols = rng.gen_range(2..16);
        let rows = rng.gen_range(1..8);
        let layer = random_layer(&mut rng, rows, cols, Activation::Relu);
        let net = DenseNet::new(cols, vec![layer]).unwrap();
        let x = vector(&mut rng, cols);
        let rankings: Vec<Vec<usize>> = [1.0, 10.0, 100.0]
            .iter()
            .map(|&e| attribution_from_transform(&explain_sample(&net, &x, e).unwrap()).ranking)
            .collect();
        let base = attribution_from_transform(&explain_sample(&net, &x, 1.0).unwrap()).scores;
        // Near-ties can legitimately swap under rounding; only compare well-separated scores.
        let mut sorted = base.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        if sorted.windows(2).any(|w| (w[0] - w[1]).abs() < 1e-9) {
            continue;
        }
        assert_eq!(rankings[0], rankings[1]);
        assert_eq!(rankings[0], rankings[2]);
    }
}

fn mean_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0;
    for i in 0..points.len() {
        for j in i + 1..points.len() {
            total += points[i].iter().zip(&points[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            count += 1;
        }
    }
    total / count as f64
}

#[test]
fn trained_net_pulls_same_class_samples_together() {
    let data = generate_synthetic(&SyntheticSpec::two_feature_blobs(200, 0.8), 21).unwrap();
    let arch = Architecture {
        hidden: vec![16, 16],
        ..Architecture::default()
    };
    let net = DenseNet::init(2, 2, &arch, 3).unwrap();
    let cfg = TrainConfig {
        epochs: 60,
        learning_rate: 0.05,
        batch_size: 16,
        seed: 4,
    };
    let net = train(&net, &data, &cfg).unwrap();
    assert!(accuracy(&net, &data).unwrap() >= 0.9);
    for class in data.indices_by_class() {
        let original: Vec<Vec<f64>> = class.iter().map(|&i| data.samples()[i].clone()).collect();
        let moved: Vec<Vec<f64>> = original
            .iter()
            .map(|x| explain_sample(&net, x, 1.0).unwrap().input_space_x_prime)
            .collect();
        let (before, after) = (mean_pairwise_distance(&original), mean_pairwise_distance(&moved));
        assert!(after < before, "intra-class distance {before} -> {after}");
    }
}
