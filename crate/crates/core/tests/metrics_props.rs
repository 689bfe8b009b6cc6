mod common;

use common::{random_instance, random_theta};

use std::collections::BTreeMap;

use ndarray::Array2;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rfxfer::statfit::{linear_fit, pearson_r, predict_accuracy, select_source, weighted_tau, AccuracyPredictor};
use rfxfer::tmetrics::{leep_from_probs, logme, ScoreKind};

fn to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(i, j)| rows[i][j])
}

#[test]
fn leep_matches_definition_and_is_nonpositive() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..200 {
        let n = rng.gen_range(1..30);
        let cs = rng.gen_range(1..6);
        let ct = rng.gen_range(1..5);
        let theta = random_theta(&mut rng, n, cs);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..ct)).collect();
        let v = leep_from_probs(to_array(&theta).view(), &labels, ct).unwrap();
        assert!(v <= 0.0);
        assert!((v - common::leep_brute(&theta, &labels, ct)).abs() < 1e-10);
    }
}

#[test]
fn leep_is_permutation_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let theta = random_theta(&mut rng, 25, 4);
    let labels: Vec<usize> = (0..25).map(|_| rng.gen_range(0..3)).collect();
    let base = leep_from_probs(to_array(&theta).view(), &labels, 3).unwrap();
    let mut idx: Vec<usize> = (0..25).collect();
    idx.shuffle(&mut rng);
    let t2: Vec<Vec<f64>> = idx.iter().map(|&i| theta[i].clone()).collect();
    let l2: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
    let perm = leep_from_probs(to_array(&t2).view(), &l2, 3).unwrap();
    assert!((base - perm).abs() < 1e-12);
}

#[test]
fn input_independent_predictor_scores_negative_entropy() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let n = rng.gen_range(5..40);
        let row = random_theta(&mut rng, 1, 5).remove(0);
        let theta = vec![row; n];
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let mut counts = [0usize; 4];
        labels.iter().for_each(|&l| counts[l] += 1);
        let neg_entropy: f64 = counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n as f64;
                p * p.ln()
            })
            .sum();
        let v = leep_from_probs(to_array(&theta).view(), &labels, 4).unwrap();
        assert!((v - neg_entropy).abs() < 1e-9);
    }
}

#[test]
fn logme_matches_evidence_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..12 {
        let (f, labels) = random_instance(&mut rng, 20, 3, 2);
        let fast = logme(to_array(&f).view(), &labels, 2).unwrap();
        let slow = common::grid_logme(&f, &labels, 2);
        assert!((fast - slow).abs() < 1e-3, "fixed point {fast} vs grid {slow}");
    }
}

#[test]
fn logme_prefers_linearly_explained_labels() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let (f, labels) = random_instance(&mut rng, 60, 4, 3);
        let mut shuffled = labels.clone();
        shuffled.shuffle(&mut rng);
        let fa = to_array(&f);
        let real = logme(fa.view(), &labels, 3).unwrap();
        let fake = logme(fa.view(), &shuffled, 3).unwrap();
        assert!(real > fake, "{real} <= {fake}");
    }
}

#[test]
fn tau_matches_pair_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..300 {
        let n = rng.gen_range(2..=8);
        // Small integer supports force ties in both variables.
        let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64).collect();
        if x.iter().all(|&v| v == x[0]) && y.iter().all(|&v| v == y[0]) {
            continue;
        }
        let fast = weighted_tau(&x, &y).unwrap();
        let slow = common::weighted_tau_brute(&x, &y);
        assert!((fast - slow).abs() < 1e-12, "{x:?} {y:?}: {fast} vs {slow}");
    }
}

#[test]
fn ols_slope_recovers_noisy_line() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let normal = rand_distr::Normal::new(0.0, 0.01).unwrap();
    let x: Vec<f64> = (0..100).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let y: Vec<f64> = x.iter().map(|v| 0.5 * v + 0.1 + rng.sample(normal)).collect();
    let (b0, _) = linear_fit(&x, &y).unwrap();
    assert!((b0 - 0.5).abs() < 0.01);
}

#[test]
fn mirrored_points_leave_fit_unchanged() {
    let x = [0.0, 1.0, 2.0, 4.0];
    let y = [1.0, 2.0, 2.5, 5.0];
    let (b0, b1) = linear_fit(&x, &y).unwrap();
    // Add a pair symmetric about a point on the fitted line.
    let (px, d) = (1.5, 0.7);
    let py = b0 * px + b1;
    let mut x2 = x.to_vec();
    let mut y2 = y.to_vec();
    x2.extend([px - d, px + d]);
    y2.extend([py - b0 * d, py + b0 * d]);
    let (c0, c1) = linear_fit(&x2, &y2).unwrap();
    assert!((b0 - c0).abs() < 1e-12 && (b1 - c1).abs() < 1e-12);
}

proptest! {
    #[test]
    fn ols_residuals_average_to_zero(pts in prop::collection::vec((-10.0f64..10.0, -1.0f64..2.0), 3..60)) {
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        prop_assume!(x.iter().any(|&v| (v - x[0]).abs() > 1e-6));
        let (b0, b1) = linear_fit(&x, &y).unwrap();
        let mean: f64 = x.iter().zip(&y).map(|(a, b)| b - (b0 * a + b1)).sum::<f64>() / x.len() as f64;
        prop_assert!(mean.abs() < 1e-9);
    }

    #[test]
    fn correlations_are_symmetric_under_joint_permutation(
        pts in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..30),
        seed in any::<u64>(),
    ) {
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let xp: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let t1 = weighted_tau(&x, &y).unwrap();
        prop_assert!((t1 - weighted_tau(&xp, &yp).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&t1));
        if let (Ok(a), Ok(b)) = (pearson_r(&x, &y), pearson_r(&xp, &yp)) {
            prop_assert!((a - b).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn intervals_contain_the_estimate(
        b0 in -3.0f64..3.0, b1 in -1.0f64..2.0, score in -5.0f64..5.0, spread in 0.0f64..0.3,
    ) {
        let scores = [-1.0, 0.0, 1.0, 2.0];
        let acc: Vec<f64> = scores.iter().enumerate()
            .map(|(i, s)| b0 * s + b1 + if i % 2 == 0 { spread } else { -spread })
            .collect();
        let p = AccuracyPredictor::fit(ScoreKind::Leep, &scores, &acc).unwrap();
        for conf in [0.90, 0.95, 0.99] {
            let r = predict_accuracy(&p, score, conf).unwrap();
            prop_assert!(r.lower <= r.estimate && r.estimate <= r.upper);
            prop_assert!(0.0 <= r.lower && r.upper <= 1.0);
        }
    }

    #[test]
    fn selection_survives_monotone_transforms(vals in prop::collection::vec(-5.0f64..5.0, 1..8)) {
        let m: BTreeMap<String, f64> = vals.iter().enumerate().map(|(i, &v)| (format!("s{i}"), v)).collect();
        let t: BTreeMap<String, f64> = m.iter().map(|(k, &v)| (k.clone(), v.exp() * 3.0 + 1.0)).collect();
        prop_assert_eq!(select_source(&m).unwrap(), select_source(&t).unwrap());
    }
}
