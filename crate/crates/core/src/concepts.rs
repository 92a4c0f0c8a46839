//! Concept extraction: feature-block fragments clustered with k-means,
//! ranked by importance, and compared against a reference ranking.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ConceptTruth;
use crate::error::{Error, Result};
use crate::explain::AttributionMap;
use crate::seed;

pub const KMEANS_TOLERANCE: f64 = 1e-8;
pub const KMEANS_MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptItem {
    pub item_id: usize,
    pub source_sample_id: usize,
    pub block: usize,
    pub vector_original: Vec<f64>,
    pub vector_transformed: Vec<f64>,
    pub importance: f64,
}

/// One fragment per (sample, block): the sample with every feature outside
/// the block zeroed, in both the original and the transformed space.
/// Importance is the summed attribution over the block.
pub fn fragment_items(
    samples: &[Vec<f64>],
    transformed: &[Vec<f64>],
    attributions: &[AttributionMap],
    block_width: usize,
) -> Result<Vec<ConceptItem>> {
    if samples.len() != transformed.len() || samples.len() != attributions.len() {
        return Err(Error::invalid("samples, transformed samples and attributions differ in count"));
    }
    let d = samples.first().map_or(0, Vec::len);
    if block_width == 0 || !d.is_multiple_of(block_width) {
        return Err(Error::invalid(format!("block width {block_width} does not divide {d} features")));
    }
    let blocks = d / block_width;
    let mut items = Vec::with_capacity(samples.len() * blocks);
    for (s, ((x, xp), a)) in samples.iter().zip(transformed).zip(attributions).enumerate() {
        if x.len() != d || xp.len() != d || a.len() != d {
            return Err(Error::invalid(format!("sample {s} has inconsistent dimensions")));
        }
        for b in 0..blocks {
            let range = b * block_width..(b + 1) * block_width;
            let mask = |v: &[f64]| -> Vec<f64> {
                v.iter()
                    .enumerate()
                    .map(|(j, &x)| if range.contains(&j) { x } else { 0.0 })
                    .collect()
            };
            items.push(ConceptItem {
                item_id: items.len(),
                source_sample_id: s,
                block: b,
                vector_original: mask(x),
                vector_transformed: mask(xp),
                importance: a.scores[range.clone()].iter().sum(),
            });
        }
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeans {
    pub centroids: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
    pub wcss: f64,
    /// WCSS after every Lloyd iteration of the winning restart.
    pub wcss_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(c, m)| (c, sq_dist(point, m)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut seed::Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut dist: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = dist.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in dist.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        centroids.push(points[pick].clone());
        for (d, p) in dist.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }
    centroids
}

fn lloyd(points: &[Vec<f64>], k: usize, seed: u64) -> KMeans {
    let mut rng = seed::rng(seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let dim = points[0].len();
    let mut assignment = vec![0; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        iterations += 1;
        for (a, p) in assignment.iter_mut().zip(points) {
            *a = nearest(p, &centroids).0;
        }
        let mut counts = vec![0usize; k];
        assignment.iter().for_each(|&a| counts[a] += 1);
        // Reseed empty clusters at the point farthest from its centroid.
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let far = (0..points.len())
                .filter(|&i| counts[assignment[i]] > 1)
                .map(|i| (i, sq_dist(&points[i], &centroids[assignment[i]])))
                .fold(None, |best: Option<(usize, f64)>, cur| match best {
                    Some(b) if b.1 >= cur.1 => Some(b),
                    _ => Some(cur),
                });
            if let Some((i, _)) = far {
                counts[assignment[i]] -= 1;
                assignment[i] = c;
                counts[c] = 1;
                centroids[c] = points[i].clone();
            }
        }
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&assignment) {
            sums[a].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let next: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            shift = shift.max(sq_dist(&next, &centroids[c]).sqrt());
            centroids[c] = next;
        }
        history.push(points.iter().zip(&assignment).map(|(p, &a)| sq_dist(p, &centroids[a])).sum());
        if shift < KMEANS_TOLERANCE || iterations >= KMEANS_MAX_ITERATIONS {
            break;
        }
    }
    KMeans {
        centroids,
        assignment,
        wcss: *history.last().expect("at least one iteration"),
        wcss_history: history,
        iterations,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the restart with the lowest
/// WCSS wins (earliest restart on ties).
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, restarts: usize) -> Result<KMeans> {
    if k == 0 || k > points.len() {
        return Err(Error::invalid(format!("k = {k} with {} items", points.len())));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("items must be finite vectors of equal dimension"));
    }
    let runs: Vec<KMeans> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| lloyd(points, k, seed::derive_seed(seed, &format!("restart-{r}"))))
        .collect();
    Ok(runs
        .into_iter()
        .reduce(|best, run| if run.wcss < best.wcss { run } else { best })
        .expect("at least one restart"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    Original,
    Transformed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConceptGroup {
    pub centroid: Vec<f64>,
    pub member_ids: Vec<usize>,
    pub group_importance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConceptGrouping {
    pub groups: Vec<ConceptGroup>,
    pub k: usize,
    pub seed: u64,
    pub wcss: f64,
}

/// Clusters items in the chosen space.
pub fn group_items(items: &[ConceptItem], space: Space, k: usize, seed: u64, restarts: usize) -> Result<ConceptGrouping> {
    let points: Vec<Vec<f64>> = items
        .iter()
        .map(|i| match space {
            Space::Original => i.vector_original.clone(),
            Space::Transformed => i.vector_transformed.clone(),
        })
        .collect();
    let km = kmeans(&points, k, seed, restarts)?;
    let mut members = vec![Vec::new(); k];
    for (item, &c) in items.iter().zip(&km.assignment) {
        members[c].push(item.item_id);
    }
    let importance = |ids: &[usize]| -> f64 {
        ids.iter().map(|&id| items[id].importance).sum::<f64>() / ids.len().max(1) as f64
    };
    let groups = km
        .centroids
        .into_iter()
        .zip(members)
        .map(|(centroid, member_ids)| ConceptGroup {
            group_importance: importance(&member_ids),
            centroid,
            member_ids,
        })
        .collect();
    Ok(ConceptGrouping {
        groups,
        k,
        seed,
        wcss: km.wcss,
    })
}

/// Ranked groups, each holding its selected item ids in rank order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedSelection {
    pub universe: usize,
    pub groups: Vec<Vec<usize>>,
}

impl RankedSelection {
    pub fn all_selected(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.groups.iter().flatten().copied().collect();
        all.sort_unstable();
        all.dedup();
        all
    }
}

/// Groups by descending importance (ties by group index), then the
/// `per_group` most important members of each (ties by item id).
pub fn rank_groups(grouping: &ConceptGrouping, items: &[ConceptItem], per_group: usize) -> RankedSelection {
    let mut order: Vec<usize> = (0..grouping.groups.len()).collect();
    order.sort_by(|&a, &b| grouping.groups[b].group_importance.total_cmp(&grouping.groups[a].group_importance));
    let groups = order
        .into_iter()
        .map(|g| {
            let mut ids = grouping.groups[g].member_ids.clone();
            ids.sort_by(|&a, &b| items[b].importance.total_cmp(&items[a].importance).then(a.cmp(&b)));
            ids.truncate(per_group);
            ids
        })
        .collect();
    RankedSelection {
        universe: items.len(),
        groups,
    }
}

/// Same groups as [`rank_groups`], members drawn uniformly at random.
pub fn random_selection(grouping: &ConceptGrouping, items: &[ConceptItem], per_group: usize, seed: u64) -> RankedSelection {
    let mut ranked = rank_groups(grouping, items, 0);
    let mut rng = seed::rng(seed);
    let mut order: Vec<usize> = (0..grouping.groups.len()).collect();
    order.sort_by(|&a, &b| grouping.groups[b].group_importance.total_cmp(&grouping.groups[a].group_importance));
    for (slot, g) in ranked.groups.iter_mut().zip(order) {
        let members = &grouping.groups[g].member_ids;
        let take = per_group.min(members.len());
        *slot = rand::seq::index::sample(&mut rng, members.len(), take)
            .into_iter()
            .map(|i| members[i])
            .collect();
    }
    ranked
}

/// Reference ranking from the generator's ground truth. Concepts are ranked
/// by informativeness times mean amplitude, members by amplitude.
pub fn reference_selection(truth: &ConceptTruth, items: &[ConceptItem], groups: usize, per_group: usize) -> RankedSelection {
    let concept_of = |item: &ConceptItem| truth.concept[item.source_sample_id][item.block];
    let weight = |item: &ConceptItem| {
        if truth.informative_blocks[item.block] {
            truth.amplitude[item.source_sample_id]
        } else {
            0.0
        }
    };
    let mut members = vec![Vec::new(); truth.concept_count()];
    for item in items {
        members[concept_of(item)].push(item.item_id);
    }
    let importance: Vec<f64> = members
        .iter()
        .map(|ids| ids.iter().map(|&id| weight(&items[id])).sum::<f64>() / ids.len().max(1) as f64)
        .collect();
    let mut order: Vec<usize> = (0..members.len()).filter(|&c| !members[c].is_empty()).collect();
    order.sort_by(|&a, &b| importance[b].total_cmp(&importance[a]));
    order.truncate(groups);
    let selected = order
        .into_iter()
        .map(|c| {
            let mut ids = members[c].clone();
            ids.sort_by(|&a, &b| weight(&items[b]).total_cmp(&weight(&items[a])).then(a.cmp(&b)));
            ids.truncate(per_group);
            ids
        })
        .collect();
    RankedSelection {
        universe: items.len(),
        groups: selected,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Overlap {
    /// Overlaps within corresponding groups.
    pub n: usize,
    /// Overlaps across everything selected.
    pub m: usize,
}

fn intersection(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|x| b.contains(x)).count()
}

/// Overlap of two selections. Groups are paired greedily by descending
/// overlap (ties by lower group index in `ours`, then in `reference`).
pub fn overlap(ours: &RankedSelection, reference: &RankedSelection) -> Result<Overlap> {
    if ours.universe != reference.universe {
        return Err(Error::invalid(format!(
            "selections come from universes of {} and {} items",
            ours.universe, reference.universe
        )));
    }
    if ours.groups.iter().chain(&reference.groups).flatten().any(|&id| id >= ours.universe) {
        return Err(Error::invalid("selection refers to an item outside the universe"));
    }
    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for (i, a) in ours.groups.iter().enumerate() {
        for (j, b) in reference.groups.iter().enumerate() {
            pairs.push((intersection(a, b), i, j));
        }
    }
    pairs.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_ours = vec![false; ours.groups.len()];
    let mut used_ref = vec![false; reference.groups.len()];
    let mut n = 0;
    for (count, i, j) in pairs {
        if !used_ours[i] && !used_ref[j] {
            used_ours[i] = true;
            used_ref[j] = true;
            n += count;
        }
    }
    let m = intersection(&ours.all_selected(), &reference.all_selected());
    Ok(Overlap { n, m })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OverlapReport {
    pub n: f64,
    pub m: f64,
    /// `n / m`; reported as 0 when `m == 0`.
    pub hit_rate: f64,
    pub hit_rate_defined: bool,
    pub n_max: f64,
    pub m_max: f64,
    pub repetitions: usize,
}

/// Mean and maximum of N and M over repetitions.
pub fn overlap_metrics(pairs: &[(RankedSelection, RankedSelection)]) -> Result<OverlapReport> {
    let overlaps = pairs.iter().map(|(a, b)| overlap(a, b)).collect::<Result<Vec<_>>>()?;
    let reps = overlaps.len();
    let mean = |f: fn(&Overlap) -> usize| {
        if reps == 0 {
            0.0
        } else {
            overlaps.iter().map(f).sum::<usize>() as f64 / reps as f64
        }
    };
    let max = |f: fn(&Overlap) -> usize| overlaps.iter().map(f).max().unwrap_or(0) as f64;
    let (n, m) = (mean(|o| o.n), mean(|o| o.m));
    Ok(OverlapReport {
        n,
        m,
        hit_rate: if m > 0.0 { n / m } else { 0.0 },
        hit_rate_defined: m > 0.0,
        n_max: max(|o| o.n),
        m_max: max(|o| o.m),
        repetitions: reps,
    })
}
