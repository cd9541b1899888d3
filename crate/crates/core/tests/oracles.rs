mod common;

use common::oracles::{direct_scores, exhaustive_kmeans, finite_difference_gap};
use mnid::classifier::{loss_gradient, SoftmaxModel};
use mnid::clustering::{kmeans, KMeansParams};
use mnid::domain::ClassId;
use mnid::eval::{accuracy_macro_f1, mcnemar, mcnemar_from_counts};
use mnid::ingest::EmbeddingMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn exhaustive_oracle_on_a_known_case() {
    let pts = vec![vec![0.0], vec![1.0], vec![10.0], vec![11.0]];
    assert_eq!(exhaustive_kmeans(&pts, 2), 1.0);
    assert_eq!(exhaustive_kmeans(&pts, 4), 0.0);
}

#[test]
fn kmeans_restarts_reach_the_exhaustive_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut hits = 0;
    for _ in 0..100 {
        let n = rng.random_range(3..=10);
        let k = rng.random_range(1..=3.min(n));
        let d = rng.random_range(1..=3);
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let x = EmbeddingMatrix::from_rows(&pts).unwrap();
        let rows: Vec<usize> = (0..n).collect();
        let best = (0..20)
            .map(|s| kmeans(&rows, &x, k, &KMeansParams::seeded(7).with_stream(s)).unwrap().inertia)
            .fold(f64::INFINITY, f64::min);
        let opt = exhaustive_kmeans(&pts, k);
        if (best - opt).abs() <= 1e-6 * opt.max(1e-12) || (best - opt).abs() < 1e-12 {
            hits += 1;
        }
    }
    assert!(hits >= 95, "{hits}/100");
}

#[test]
fn gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let (c, d, n) = (3, 4, 12);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let x = EmbeddingMatrix::from_rows(&rows).unwrap();
        let mut model = SoftmaxModel::zeros((0..c).map(ClassId).collect(), d);
        model.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        model.bias.iter_mut().for_each(|b| *b = rng.random_range(-1.0..1.0));
        let batch: Vec<(usize, usize)> = (0..n).map(|r| (r, rng.random_range(0..c))).collect();
        let l2 = rng.random_range(0.0..0.1);
        let (_, g) = loss_gradient(&model, &x, &batch, l2);
        let gap = finite_difference_gap(&model, &x, &batch, l2, &g.weights, &g.bias, 1e-4);
        assert!(gap <= 1e-5, "gap {gap}");
    }
}

#[test]
fn scores_match_direct_formulas() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let n = rng.random_range(1..60);
        let c = rng.random_range(1..6);
        let gold: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..c + 1)).collect();
        let (acc, f1) = accuracy_macro_f1(&pred, &gold).unwrap();
        let (acc_o, f1_o) = direct_scores(&pred, &gold);
        assert!((acc - acc_o).abs() <= 1e-12);
        assert!((f1 - f1_o).abs() <= 1e-12, "{f1} vs {f1_o}");
    }
}

#[test]
fn mcnemar_hand_values_and_symmetry() {
    assert_eq!(mcnemar_from_counts(2, 8).chi_square, 2.5);
    assert_eq!(mcnemar_from_counts(1, 14).chi_square, 9.6);
    let gold = [0, 1, 0, 1, 1, 0];
    let a = [0, 1, 1, 1, 0, 0];
    let b = [1, 1, 0, 0, 1, 0];
    let ab = mcnemar(&a, &b, &gold).unwrap();
    let ba = mcnemar(&b, &a, &gold).unwrap();
    assert_eq!(ab.chi_square, ba.chi_square);
    assert_eq!((ab.b, ab.c), (ba.c, ba.b));
}

#[test]
fn macro_f1_ignores_relabeling() {
    let gold = [0, 0, 1, 2, 2, 2, 1];
    let pred = [0, 1, 1, 2, 0, 2, 2];
    let perm = |v: &[usize]| v.iter().map(|&c| [2, 0, 1][c]).collect::<Vec<_>>();
    assert_eq!(
        accuracy_macro_f1(&pred, &gold).unwrap(),
        accuracy_macro_f1(&perm(&pred), &perm(&gold)).unwrap()
    );
}
