//! Global feature importance from explanations, top-k feature selection,
//! vertical client partitions and contribution scoring against exact
//! Shapley values.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::explain_sample;
use crate::nn::{accuracy, DenseNet, LabeledDataset, Trainer};
use crate::seed;

/// Largest client count for exhaustive coalition enumeration.
pub const MAX_SHAPLEY_CLIENTS: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    /// `v_c`: mean input-space movement of the samples of class `c`.
    pub per_class_mean_delta: Vec<Vec<f64>>,
    /// `s_j = |Π_c v_cj|`.
    pub scores: Vec<f64>,
    /// Every feature, most important first (ties by index).
    pub order: Vec<usize>,
}

impl FeatureImportance {
    pub fn from_class_means(per_class_mean_delta: Vec<Vec<f64>>) -> Result<Self> {
        let d = per_class_mean_delta.first().map_or(0, Vec::len);
        if d == 0 || per_class_mean_delta.iter().any(|v| v.len() != d) {
            return Err(Error::invalid("class mean vectors must be non-empty and equally long"));
        }
        let scores: Vec<f64> = (0..d)
            .map(|j| per_class_mean_delta.iter().map(|v| v[j]).product::<f64>().abs())
            .collect();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        Ok(Self {
            per_class_mean_delta,
            scores,
            order,
        })
    }

    pub fn top_k(&self, k: usize) -> Vec<usize> {
        self.order[..k.min(self.order.len())].to_vec()
    }
}

/// Explains every sample and averages `x' - x` per class.
pub fn aggregate_importance(net: &DenseNet, data: &LabeledDataset, epsilon: f64) -> Result<FeatureImportance> {
    if data.class_count() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            context: "dataset classes vs network outputs",
            expected: net.output_dim(),
            found: data.class_count(),
        });
    }
    let deltas: Vec<Vec<f64>> = data
        .samples()
        .par_iter()
        .map(|x| explain_sample(net, x, epsilon).map(|r| r.input_delta()))
        .collect::<Result<_>>()?;
    let d = data.feature_count();
    let means = data
        .indices_by_class()
        .iter()
        .enumerate()
        .map(|(c, rows)| {
            if rows.is_empty() {
                return Err(Error::invalid(format!("class {c} has no samples")));
            }
            let mut v = vec![0.0; d];
            for &r in rows {
                v.iter_mut().zip(&deltas[r]).for_each(|(a, b)| *a += b);
            }
            v.iter_mut().for_each(|a| *a /= rows.len() as f64);
            Ok(v)
        })
        .collect::<Result<Vec<_>>>()?;
    FeatureImportance::from_class_means(means)
}

/// Disjoint feature sets, one per client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientPartition {
    pub clients: Vec<Vec<usize>>,
    pub seed: u64,
}

impl ClientPartition {
    /// Shuffles the feature groups and hands each to the client holding the
    /// fewest features so far (lowest index on ties). Groups are never split,
    /// so with singleton groups the client sizes differ by at most one.
    pub fn even_random(groups: &[Vec<usize>], clients: usize, seed: u64) -> Result<Self> {
        if clients == 0 {
            return Err(Error::invalid("need at least one client"));
        }
        let mut order: Vec<usize> = (0..groups.len()).collect();
        order.shuffle(&mut seed::rng(seed));
        let mut sets = vec![Vec::new(); clients];
        for g in order {
            let target = (0..clients).min_by_key(|&c| (sets[c].len(), c)).expect("clients > 0");
            sets[target].extend_from_slice(&groups[g]);
        }
        sets.iter_mut().for_each(|s| s.sort_unstable());
        Ok(Self { clients: sets, seed })
    }

    pub fn singleton_groups(d: usize) -> Vec<Vec<usize>> {
        (0..d).map(|j| vec![j]).collect()
    }

    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    /// Features of the clients whose bits are set in `mask`, ascending.
    pub fn features_of(&self, mask: usize) -> Vec<usize> {
        let mut f: Vec<usize> = (0..self.clients.len())
            .filter(|c| mask >> c & 1 == 1)
            .flat_map(|c| self.clients[c].iter().copied())
            .collect();
        f.sort_unstable();
        f
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Shapley values from a coalition value table indexed by client bitmask.
pub fn shapley_from_table(values: &[f64], clients: usize) -> Result<Vec<f64>> {
    if clients == 0 || clients > MAX_SHAPLEY_CLIENTS {
        return Err(Error::invalid(format!(
            "{clients} clients; exact Shapley supports 1 to {MAX_SHAPLEY_CLIENTS}"
        )));
    }
    if values.len() != 1 << clients {
        return Err(Error::invalid(format!(
            "value table has {} entries, expected {}",
            values.len(),
            1usize << clients
        )));
    }
    let total = factorial(clients);
    Ok((0..clients)
        .map(|i| {
            (0..values.len())
                .filter(|s| s >> i & 1 == 0)
                .map(|s| {
                    let size = s.count_ones() as usize;
                    let weight = factorial(size) * factorial(clients - size - 1) / total;
                    weight * (values[s | 1 << i] - values[s])
                })
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapleyReport {
    /// Test accuracy per coalition bitmask.
    pub coalition_values: Vec<f64>,
    pub values: Vec<f64>,
}

/// Trains one model per coalition with the same trainer and seeds; the empty
/// coalition scores the training majority class on the test split.
pub fn shapley_exact(
    train: &LabeledDataset,
    test: &LabeledDataset,
    partition: &ClientPartition,
    trainer: &Trainer,
) -> Result<ShapleyReport> {
    let clients = partition.len();
    if clients == 0 || clients > MAX_SHAPLEY_CLIENTS {
        return Err(Error::invalid(format!(
            "{clients} clients; exact Shapley supports 1 to {MAX_SHAPLEY_CLIENTS}"
        )));
    }
    let majority = train.majority_class();
    let coalition_values: Vec<f64> = (0..1usize << clients)
        .into_par_iter()
        .map(|mask| {
            let features = partition.features_of(mask);
            if features.is_empty() {
                let hits = test.labels().iter().filter(|&&l| l == majority).count();
                return Ok(hits as f64 / test.len() as f64);
            }
            let net = trainer.fit(&train.select_features(&features)?)?;
            accuracy(&net, &test.select_features(&features)?)
        })
        .collect::<Result<_>>()?;
    let values = shapley_from_table(&coalition_values, clients)?;
    Ok(ShapleyReport {
        coalition_values,
        values,
    })
}

/// Indices by descending value, ties by lower index.
pub fn rank_descending(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    order
}

/// Positions at which two rankings name the same element.
pub fn fixed_points(a: &[usize], b: &[usize]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x == y).count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContributionReport {
    pub ours_scores: Vec<f64>,
    pub ours_rank: Vec<usize>,
    pub shapley_values: Vec<f64>,
    pub shapley_rank: Vec<usize>,
    pub overlap_count: usize,
}

/// A client's score is the sum of `s_j` over its features.
pub fn contribution_compare(
    importance: &FeatureImportance,
    partition: &ClientPartition,
    shapley: &[f64],
) -> Result<ContributionReport> {
    if shapley.len() != partition.len() {
        return Err(Error::DimensionMismatch {
            context: "Shapley values per client",
            expected: partition.len(),
            found: shapley.len(),
        });
    }
    let ours_scores: Vec<f64> = partition
        .clients
        .iter()
        .map(|fs| {
            fs.iter()
                .map(|&j| importance.scores.get(j).copied().ok_or_else(|| Error::invalid(format!("feature {j} has no score"))))
                .sum()
        })
        .collect::<Result<_>>()?;
    let ours_rank = rank_descending(&ours_scores);
    let shapley_rank = rank_descending(shapley);
    Ok(ContributionReport {
        overlap_count: fixed_points(&ours_rank, &shapley_rank),
        ours_scores,
        ours_rank,
        shapley_values: shapley.to_vec(),
        shapley_rank,
    })
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for rest in permutations(n - 1) {
        for pos in 0..=rest.len() {
            let mut p = rest.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out.sort();
    out
}

/// Mean fixed-point count over every ordered pair of permutations of `n`
/// elements: the overlap expected from unrelated rankings.
pub fn random_rank_overlap_baseline(n: usize) -> f64 {
    let perms = permutations(n);
    let total: usize = perms.iter().flat_map(|a| perms.iter().map(move |b| fixed_points(a, b))).sum();
    total as f64 / (perms.len() * perms.len()) as f64
}
