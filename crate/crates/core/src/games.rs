//! Deletion and insertion games in the time (feature) domain and the
//! frequency domain.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::AttributionMap;
use crate::nn::DenseNet;
use crate::seed;
use crate::spectral::{conjugate_index, dft_shaped, idft_complex, Spectrum};

/// Value written into deleted features. Features are z-scored, so this is the mean.
pub const DELETION_BASELINE: f64 = 0.0;

/// Largest imaginary part tolerated after a frequency deletion.
pub const IMAGINARY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeletionMode {
    DeleteMostImportant,
    DeleteLeastImportant,
    /// Start from the baseline and restore the most important entries.
    InsertMostImportant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Domain {
    Time,
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Response {
    /// Mean probability of the class predicted on the clean input.
    ClassProbability,
    /// Share of samples whose prediction changed.
    PredictionFlipRate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeletionCurve {
    pub fractions: Vec<f64>,
    pub mean_probability: Vec<f64>,
    pub flip_rate: Vec<f64>,
    pub mode: DeletionMode,
    pub domain: Domain,
}

impl DeletionCurve {
    pub fn outputs(&self, response: Response) -> &[f64] {
        match response {
            Response::ClassProbability => &self.mean_probability,
            Response::PredictionFlipRate => &self.flip_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.fractions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fractions.is_empty()
    }
}

/// Number of entries a fraction selects out of `d`.
pub fn selection_count(fraction: f64, d: usize) -> usize {
    ((fraction * d as f64 + 1e-9).floor() as usize).min(d)
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("fraction {fraction} outside [0, 1]")));
    }
    Ok(())
}

/// Deletes (or, for insertion, keeps) `floor(fraction·d)` features chosen from
/// the attribution ranking.
pub fn time_domain_delete(x: &[f64], attribution: &AttributionMap, fraction: f64, mode: DeletionMode) -> Result<Vec<f64>> {
    check_fraction(fraction)?;
    if x.len() != attribution.len() {
        return Err(Error::DimensionMismatch {
            context: "attribution map",
            expected: x.len(),
            found: attribution.len(),
        });
    }
    let count = selection_count(fraction, x.len());
    let ranking = &attribution.ranking;
    Ok(match mode {
        DeletionMode::DeleteMostImportant => {
            let mut out = x.to_vec();
            ranking[..count].iter().for_each(|&j| out[j] = DELETION_BASELINE);
            out
        }
        DeletionMode::DeleteLeastImportant => {
            let mut out = x.to_vec();
            ranking[x.len() - count..].iter().for_each(|&j| out[j] = DELETION_BASELINE);
            out
        }
        DeletionMode::InsertMostImportant => {
            let mut out = vec![DELETION_BASELINE; x.len()];
            ranking[..count].iter().for_each(|&j| out[j] = x[j]);
            out
        }
    })
}

/// Frequencies of an attribution map ordered by descending magnitude, with
/// each conjugate pair fused into one group.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyRanking {
    pub spectrum: Spectrum,
    /// Groups of flat frequency indices, most important first. A group is a
    /// self-conjugate frequency or a `{k, conj(k)}` pair.
    pub groups: Vec<Vec<usize>>,
    /// The groups flattened; adjacent entries of a pair stay adjacent.
    pub order: Vec<usize>,
}

impl FrequencyRanking {
    pub fn shape(&self) -> (usize, usize) {
        self.spectrum.shape()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

fn rank_spectrum(spectrum: Spectrum) -> FrequencyRanking {
    let magnitudes = spectrum.magnitudes();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for k in 0..spectrum.len() {
        let c = spectrum.conjugate_index(k);
        if c < k {
            continue;
        }
        groups.push(if c == k { vec![k] } else { vec![k, c] });
    }
    let strength = |g: &[usize]| g.iter().map(|&k| magnitudes[k]).fold(0.0, f64::max);
    // Groups are created in ascending order of their lowest index, so a
    // stable sort resolves ties by ascending frequency.
    groups.sort_by(|a, b| strength(b).total_cmp(&strength(a)));
    let order = groups.iter().flatten().copied().collect();
    FrequencyRanking { spectrum, groups, order }
}

/// Ranks the frequencies of a 1-D map.
pub fn freq_rank(map: &[f64]) -> Result<FrequencyRanking> {
    Ok(rank_spectrum(dft_shaped(map, 1, map.len())?))
}

/// Ranks the frequencies of a 2-D map.
pub fn freq_rank_2d(map: &[Vec<f64>]) -> Result<FrequencyRanking> {
    Ok(rank_spectrum(crate::spectral::dft_2d(map)?))
}

/// How many frequencies a deletion touches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Amount {
    Count(usize),
    Fraction(f64),
}

impl Amount {
    fn resolve(self, n: usize) -> Result<usize> {
        match self {
            Amount::Count(c) => Ok(c.min(n)),
            Amount::Fraction(f) => {
                check_fraction(f)?;
                Ok(selection_count(f, n))
            }
        }
    }
}

/// Groups taken from the front of `groups` whose sizes fit within `budget`.
fn take_groups(groups: &[Vec<usize>], budget: usize) -> Vec<usize> {
    let mut taken = Vec::new();
    for g in groups {
        if taken.len() + g.len() > budget {
            break;
        }
        taken.extend_from_slice(g);
    }
    taken
}

/// Indices of the frequencies a deletion of `amount` zeroes under `mode`.
pub fn frequencies_to_zero(ranking: &FrequencyRanking, amount: Amount, mode: DeletionMode) -> Result<Vec<usize>> {
    let n = ranking.len();
    let budget = amount.resolve(n)?;
    Ok(match mode {
        DeletionMode::DeleteMostImportant => take_groups(&ranking.groups, budget),
        DeletionMode::DeleteLeastImportant => {
            let reversed: Vec<Vec<usize>> = ranking.groups.iter().rev().cloned().collect();
            take_groups(&reversed, budget)
        }
        DeletionMode::InsertMostImportant => {
            let kept = take_groups(&ranking.groups, budget);
            let mut keep = vec![false; n];
            kept.iter().for_each(|&k| keep[k] = true);
            (0..n).filter(|&k| !keep[k]).collect()
        }
    })
}

/// Zeroes the selected frequencies of `x` and transforms back.
pub fn freq_delete(x: &[f64], ranking: &FrequencyRanking, amount: Amount, mode: DeletionMode) -> Result<Vec<f64>> {
    let (rows, cols) = ranking.shape();
    if x.len() != rows * cols {
        return Err(Error::DimensionMismatch {
            context: "signal vs frequency ranking",
            expected: rows * cols,
            found: x.len(),
        });
    }
    let mut spectrum = dft_shaped(x, rows, cols)?;
    for k in frequencies_to_zero(ranking, amount, mode)? {
        spectrum.coefficients_mut()[k] = num_complex::Complex64::new(0.0, 0.0);
    }
    let back = idft_complex(&spectrum);
    let residue = back.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let scale = x.iter().map(|v| v.abs()).fold(1.0, f64::max);
    if residue > IMAGINARY_TOLERANCE * scale {
        return Err(Error::invalid(format!("frequency deletion left imaginary residue {residue:e}")));
    }
    Ok(back.into_iter().map(|c| c.re).collect())
}

/// Per-sample importance handed to [`run_game`].
#[derive(Debug, Clone, Copy)]
pub enum Importance<'a> {
    Time(&'a [AttributionMap]),
    Frequency(&'a [FrequencyRanking]),
}

impl Importance<'_> {
    fn len(&self) -> usize {
        match self {
            Importance::Time(a) => a.len(),
            Importance::Frequency(r) => r.len(),
        }
    }

    fn domain(&self) -> Domain {
        match self {
            Importance::Time(_) => Domain::Time,
            Importance::Frequency(_) => Domain::Frequency,
        }
    }

    fn perturb(&self, sample: usize, x: &[f64], fraction: f64, mode: DeletionMode) -> Result<Vec<f64>> {
        match self {
            Importance::Time(a) => time_domain_delete(x, &a[sample], fraction, mode),
            Importance::Frequency(r) => freq_delete(x, &r[sample], Amount::Fraction(fraction), mode),
        }
    }
}

fn check_schedule(schedule: &[f64]) -> Result<()> {
    if schedule.first() != Some(&0.0) {
        return Err(Error::invalid("fraction schedule must start at 0"));
    }
    if schedule.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("fraction schedule must be strictly increasing"));
    }
    if schedule.iter().any(|f| *f > 1.0) {
        return Err(Error::invalid("fractions must not exceed 1"));
    }
    Ok(())
}

/// `0, 1/steps, …, 1`.
pub fn uniform_schedule(steps: usize) -> Vec<f64> {
    let steps = steps.max(1);
    (0..=steps).map(|i| i as f64 / steps as f64).collect()
}

/// Plays the game on every sample at every fraction and averages the
/// responses. Sample work runs in parallel; the reduction is in sample order.
pub fn run_game(
    net: &DenseNet,
    samples: &[Vec<f64>],
    importance: Importance<'_>,
    schedule: &[f64],
    mode: DeletionMode,
) -> Result<DeletionCurve> {
    check_schedule(schedule)?;
    if samples.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    if importance.len() != samples.len() {
        return Err(Error::DimensionMismatch {
            context: "importance per sample",
            expected: samples.len(),
            found: importance.len(),
        });
    }
    let per_sample: Vec<Vec<(f64, bool)>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let clean = net.probabilities(x)?;
            let class = crate::nn::argmax(&clean);
            schedule
                .iter()
                .map(|&f| {
                    let p = net.probabilities(&importance.perturb(i, x, f, mode)?)?;
                    Ok((p[class], crate::nn::argmax(&p) != class))
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let n = samples.len() as f64;
    let mut mean_probability = vec![0.0; schedule.len()];
    let mut flip_rate = vec![0.0; schedule.len()];
    for row in &per_sample {
        for (s, &(p, flipped)) in row.iter().enumerate() {
            mean_probability[s] += p;
            flip_rate[s] += flipped as u8 as f64;
        }
    }
    mean_probability.iter_mut().for_each(|v| *v /= n);
    flip_rate.iter_mut().for_each(|v| *v /= n);
    Ok(DeletionCurve {
        fractions: schedule.to_vec(),
        mean_probability,
        flip_rate,
        mode,
        domain: importance.domain(),
    })
}

/// Uniformly random attributions, the null reference for the games.
pub fn random_attributions(samples: usize, d: usize, seed: u64) -> Result<Vec<AttributionMap>> {
    let mut rng = seed::rng(seed);
    (0..samples)
        .map(|_| AttributionMap::from_scores((0..d).map(|_| rng.gen::<f64>()).collect()))
        .collect()
}

/// Frequency rankings of uniformly random real maps.
pub fn random_frequency_rankings(samples: usize, d: usize, seed: u64) -> Result<Vec<FrequencyRanking>> {
    let mut rng = seed::rng(seed);
    (0..samples)
        .map(|_| freq_rank(&(0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()))
        .collect()
}

/// Per-frequency energies `|X(k)|²` of a 1-D signal.
pub fn spectral_energies(x: &[f64]) -> Result<Vec<f64>> {
    Ok(dft_shaped(x, 1, x.len())?.energies())
}

/// Conjugate partner of `k` in a length-`n` 1-D spectrum.
pub fn conjugate_of(k: usize, n: usize) -> usize {
    conjugate_index(k, 1, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, DenseLayer};

    fn map(scores: &[f64]) -> AttributionMap {
        AttributionMap::from_scores(scores.to_vec()).unwrap()
    }

    #[test]
    fn time_deletion_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let a = map(&[0.4, 0.1, 0.3, 0.2]);
        assert_eq!(time_domain_delete(&x, &a, 0.0, DeletionMode::DeleteMostImportant).unwrap(), x);
        assert_eq!(time_domain_delete(&x, &a, 1.0, DeletionMode::DeleteMostImportant).unwrap(), vec![0.0; 4]);
        assert_eq!(time_domain_delete(&x, &a, 0.5, DeletionMode::DeleteMostImportant).unwrap(), vec![0.0, 2.0, 0.0, 4.0]);
        assert_eq!(time_domain_delete(&x, &a, 0.5, DeletionMode::DeleteLeastImportant).unwrap(), vec![1.0, 0.0, 3.0, 0.0]);
        assert_eq!(time_domain_delete(&x, &a, 0.5, DeletionMode::InsertMostImportant).unwrap(), vec![1.0, 0.0, 3.0, 0.0]);
        assert!(time_domain_delete(&x, &a, 1.5, DeletionMode::DeleteMostImportant).is_err());
    }

    #[test]
    fn selection_count_survives_rounding() {
        assert_eq!(selection_count(0.29, 100), 29);
        assert_eq!(selection_count(0.7, 10), 7);
        assert_eq!(selection_count(0.1, 8), 0);
    }

    #[test]
    fn constant_map_ranks_dc_first() {
        let r = freq_rank(&[2.0; 8]).unwrap();
        assert_eq!(r.order, vec![0, 1, 7, 2, 6, 3, 5, 4]);
        assert_eq!(r.groups[0], vec![0]);
    }

    #[test]
    fn cosine_ranks_its_pair_first() {
        let n = 16;
        let k = 3;
        let x: Vec<f64> = (0..n).map(|t| (2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64).cos()).collect();
        let r = freq_rank(&x).unwrap();
        assert_eq!(r.groups[0], vec![3, 13]);
    }

    #[test]
    fn deleting_nothing_or_everything() {
        let x = [0.3, -1.0, 2.5, 0.7, 1.1];
        let r = freq_rank(&[1.0, 0.5, 0.2, 0.1, 0.9]).unwrap();
        let same = freq_delete(&x, &r, Amount::Count(0), DeletionMode::DeleteMostImportant).unwrap();
        assert!(same.iter().zip(&x).all(|(a, b)| (a - b).abs() < 1e-9));
        let zero = freq_delete(&x, &r, Amount::Fraction(1.0), DeletionMode::DeleteMostImportant).unwrap();
        assert!(zero.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn pairs_are_never_split() {
        let r = freq_rank(&[1.0, 3.0, -2.0, 0.5, 4.0, 1.0]).unwrap();
        for budget in 0..=6 {
            let z = frequencies_to_zero(&r, Amount::Count(budget), DeletionMode::DeleteMostImportant).unwrap();
            assert!(z.len() <= budget && z.len() + 1 >= budget);
            for &k in &z {
                assert!(z.contains(&conjugate_of(k, 6)));
            }
        }
    }

    #[test]
    fn schedule_must_start_at_zero_and_increase() {
        let layer = DenseLayer::new(2, 2, vec![1.0, 0.0, 0.0, 1.0], vec![0.0, 0.0], Activation::Softmax).unwrap();
        let net = DenseNet::new(2, vec![layer]).unwrap();
        let samples = vec![vec![1.0, 0.0]];
        let a = vec![map(&[1.0, 0.0])];
        let imp = Importance::Time(&a);
        assert!(run_game(&net, &samples, imp, &[0.1, 0.5], DeletionMode::DeleteMostImportant).is_err());
        assert!(run_game(&net, &samples, imp, &[0.0, 0.5, 0.5], DeletionMode::DeleteMostImportant).is_err());
        let curve = run_game(&net, &samples, imp, &[0.0], DeletionMode::DeleteMostImportant).unwrap();
        assert_eq!(curve.mean_probability[0], net.probabilities(&samples[0]).unwrap()[0]);
        assert_eq!(curve.flip_rate[0], 0.0);
    }
}
