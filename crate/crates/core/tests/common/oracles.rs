//! Independent reference implementations the library is checked against.
#![allow(dead_code)]

use std::collections::BTreeSet;

use mnid::classifier::{loss, SoftmaxModel};
use mnid::ingest::EmbeddingMatrix;

/// Smallest within-cluster sum of squares over every partition of the
/// points into exactly `k` non-empty groups, by enumerating all labelings.
pub fn exhaustive_kmeans(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let d = points[0].len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        if counts.iter().all(|&c| c > 0) {
            let mut sse = 0.0;
            for (p, &l) in points.iter().zip(&labels) {
                for (j, v) in p.iter().enumerate() {
                    let mean = sums[l][j] / counts[l] as f64;
                    sse += (v - mean) * (v - mean);
                }
            }
            best = best.min(sse);
        }
        // next labeling in base k
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

/// Central finite differences of the loss for every parameter; returns the
/// largest absolute difference from the given analytic gradient.
pub fn finite_difference_gap(
    model: &SoftmaxModel<f64>,
    x: &EmbeddingMatrix<f64>,
    batch: &[(usize, usize)],
    l2: f64,
    analytic_w: &[f64],
    analytic_b: &[f64],
    h: f64,
) -> f64 {
    assert_eq!(analytic_w.len(), model.weights.len());
    assert_eq!(analytic_b.len(), model.bias.len());
    let mut gap = 0.0f64;
    for (i, &analytic) in analytic_w.iter().enumerate() {
        let mut plus = model.clone();
        let mut minus = model.clone();
        plus.weights[i] += h;
        minus.weights[i] -= h;
        let num = (loss(&plus, x, batch, l2) - loss(&minus, x, batch, l2)) / (2.0 * h);
        gap = gap.max((num - analytic).abs());
    }
    for (i, &analytic) in analytic_b.iter().enumerate() {
        let mut plus = model.clone();
        let mut minus = model.clone();
        plus.bias[i] += h;
        minus.bias[i] -= h;
        let num = (loss(&plus, x, batch, l2) - loss(&minus, x, batch, l2)) / (2.0 * h);
        gap = gap.max((num - analytic).abs());
    }
    gap
}

/// Accuracy and macro-F1 straight from the definitions: per gold class,
/// precision = tp / predicted, recall = tp / support, F1 their harmonic mean.
pub fn direct_scores(pred: &[usize], gold: &[usize]) -> (f64, f64) {
    let n = gold.len();
    let correct = pred.iter().zip(gold).filter(|(p, g)| p == g).count();
    let classes: BTreeSet<usize> = gold.iter().copied().collect();
    let mut f1_sum = 0.0;
    for &c in &classes {
        let tp = pred.iter().zip(gold).filter(|&(&p, &g)| p == c && g == c).count() as f64;
        let predicted = pred.iter().filter(|&&p| p == c).count() as f64;
        let support = gold.iter().filter(|&&g| g == c).count() as f64;
        let precision = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let recall = tp / support;
        f1_sum += if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
    }
    (correct as f64 / n as f64, f1_sum / classes.len() as f64)
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
