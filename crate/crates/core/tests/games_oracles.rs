use freqx::explain::AttributionMap;
use freqx::games::{
    freq_delete, freq_rank, freq_rank_2d, run_game, selection_count, spectral_energies, time_domain_delete,
    uniform_schedule, Amount, DeletionMode, Importance,
};
use freqx::nn::{Activation, DenseLayer, DenseNet};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

fn small_net(seed: u64, d: usize) -> DenseNet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layer = |rows: usize, cols: usize, act| {
        let w = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = (0..rows).map(|_| rng.gen_range(-0.2..0.2)).collect();
        DenseLayer::new(rows, cols, w, b, act).unwrap()
    };
    let hidden = layer(6, d, Activation::Relu);
    let out = layer(3, 6, Activation::Softmax);
    DenseNet::new(d, vec![hidden, out]).unwrap()
}

#[test]
fn half_deletion_matches_hand_ranking() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let a = AttributionMap::from_scores(vec![0.1, 0.9, 0.5, 0.3]).unwrap();
    assert_eq!(a.ranking, vec![1, 2, 3, 0]);
    let most = time_domain_delete(&x, &a, 0.5, DeletionMode::DeleteMostImportant).unwrap();
    let least = time_domain_delete(&x, &a, 0.5, DeletionMode::DeleteLeastImportant).unwrap();
    let insert = time_domain_delete(&x, &a, 0.5, DeletionMode::InsertMostImportant).unwrap();
    assert_eq!(most, vec![1.0, 0.0, 0.0, 4.0]);
    assert_eq!(least, vec![0.0, 2.0, 3.0, 0.0]);
    assert_eq!(insert, vec![0.0, 2.0, 3.0, 0.0]);
}

#[test]
fn selection_count_floors() {
    assert_eq!(selection_count(0.1, 50), 5);
    assert_eq!(selection_count(0.3, 10), 3);
    assert_eq!(selection_count(0.25, 10), 2);
    assert_eq!(selection_count(1.0, 7), 7);
}

fn naive_2d(map: &[Vec<f64>]) -> Vec<Complex64> {
    let (r, c) = (map.len(), map[0].len());
    let mut out = vec![Complex64::new(0.0, 0.0); r * c];
    for u in 0..r {
        for v in 0..c {
            for m in 0..r {
                for n in 0..c {
                    let phase = -2.0 * PI * ((u * m) as f64 / r as f64 + (v * n) as f64 / c as f64);
                    out[u * c + v] += Complex64::from_polar(map[m][n], phase);
                }
            }
        }
    }
    out
}

#[test]
fn two_dimensional_ranking_agrees_with_quadruple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let map: Vec<Vec<f64>> = (0..8).map(|_| (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let ranking = freq_rank_2d(&map).unwrap();
    let oracle = naive_2d(&map);
    for (a, b) in ranking.spectrum.coefficients().iter().zip(&oracle) {
        assert!((a - b).norm() < 1e-9);
    }
    let mag: Vec<f64> = oracle.iter().map(|c| c.norm()).collect();
    let conj = |k: usize| ((8 - k / 8) % 8) * 8 + (8 - k % 8) % 8;
    let mut seen = vec![false; 64];
    let mut last = f64::INFINITY;
    for g in &ranking.groups {
        let k = g[0];
        if conj(k) == k {
            assert_eq!(g.len(), 1);
        } else {
            assert_eq!(g, &vec![k, conj(k)]);
        }
        let strength = g.iter().map(|&i| mag[i]).fold(0.0, f64::max);
        assert!(strength <= last + 1e-9);
        last = strength;
        g.iter().for_each(|&i| seen[i] = true);
    }
    assert!(seen.iter().all(|&s| s));
    assert_eq!(ranking.len(), 64);
}

#[test]
fn two_tones_come_out_on_top() {
    let n = 32;
    let x: Vec<f64> = (0..n)
        .map(|t| {
            let t = t as f64 / n as f64;
            5.0 * (2.0 * PI * 3.0 * t).cos() + (2.0 * PI * 7.0 * t).sin()
        })
        .collect();
    let r = freq_rank(&x).unwrap();
    assert_eq!(r.groups[0], vec![3, n - 3]);
    assert_eq!(r.groups[1], vec![7, n - 7]);
}

#[test]
fn frequency_deletion_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let x: Vec<f64> = (0..24).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let m: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = freq_rank(&m).unwrap();
        for mode in [DeletionMode::DeleteMostImportant, DeletionMode::DeleteLeastImportant, DeletionMode::InsertMostImportant] {
            let once = freq_delete(&x, &r, Amount::Fraction(0.4), mode).unwrap();
            let twice = freq_delete(&once, &r, Amount::Fraction(0.4), mode).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }
}

proptest! {
    #[test]
    fn frequency_deletion_never_adds_energy(
        x in prop::collection::vec(-5.0f64..5.0, 4..40),
        seed in 0u64..1000,
        fraction in 0.0f64..=1.0,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m: Vec<f64> = (0..x.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = freq_rank(&m).unwrap();
        let before = spectral_energies(&x).unwrap();
        for mode in [DeletionMode::DeleteMostImportant, DeletionMode::DeleteLeastImportant, DeletionMode::InsertMostImportant] {
            let after = spectral_energies(&freq_delete(&x, &r, Amount::Fraction(fraction), mode).unwrap()).unwrap();
            for (b, a) in before.iter().zip(&after) {
                prop_assert!(*a <= b + 1e-8 * (1.0 + b));
            }
        }
    }
}

#[test]
fn zeroing_one_sample_of_a_tone_spreads_energy() {
    let n = 16;
    let x: Vec<f64> = (0..n).map(|t| 1.0 + (2.0 * PI * t as f64 / n as f64).cos()).collect();
    let before = spectral_energies(&x).unwrap();
    let a = AttributionMap::from_scores((0..n).map(|j| if j == 3 { 1.0 } else { 0.0 }).collect()).unwrap();
    let deleted = time_domain_delete(&x, &a, 1.0 / n as f64, DeletionMode::DeleteMostImportant).unwrap();
    assert_eq!(deleted[3], 0.0);
    let after = spectral_energies(&deleted).unwrap();
    assert!(before.iter().zip(&after).any(|(b, a)| a > &(b + 1e-6)));
}

#[test]
fn games_are_deterministic_and_sized_by_the_schedule() {
    let d = 8;
    let net = small_net(1, d);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let xs: Vec<Vec<f64>> = (0..30).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let maps = freqx::games::random_attributions(xs.len(), d, 3).unwrap();
    let schedule = uniform_schedule(10);
    let a = run_game(&net, &xs, Importance::Time(&maps), &schedule, DeletionMode::DeleteMostImportant).unwrap();
    let b = run_game(&net, &xs, Importance::Time(&maps), &schedule, DeletionMode::DeleteMostImportant).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 11);
    assert_eq!(a.flip_rate[0], 0.0);
}

#[test]
fn single_point_schedule_reports_the_clean_response() {
    let d = 6;
    let net = small_net(4, d);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let xs: Vec<Vec<f64>> = (0..10).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let maps = freqx::games::random_attributions(xs.len(), d, 7).unwrap();
    let curve = run_game(&net, &xs, Importance::Time(&maps), &[0.0], DeletionMode::DeleteMostImportant).unwrap();
    let clean: f64 = xs
        .iter()
        .map(|x| {
            let p = net.probabilities(x).unwrap();
            p.iter().cloned().fold(f64::MIN, f64::max)
        })
        .sum::<f64>()
        / xs.len() as f64;
    assert!((curve.mean_probability[0] - clean).abs() < 1e-12);
    assert!(run_game(&net, &xs, Importance::Time(&maps), &[0.1, 0.5], DeletionMode::DeleteMostImportant).is_err());
    assert!(run_game(&net, &xs, Importance::Time(&maps), &[0.0, 0.5, 0.5], DeletionMode::DeleteMostImportant).is_err());
}
