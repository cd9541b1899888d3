#![allow(dead_code)]
pub mod oracles;

use mnid::domain::{Split, UtteranceRecord};
use mnid::ingest::{Corpus, EmbeddingMatrix, SyntheticSpec};

/// Corpus from (label, split) pairs with ids `p0`, `p1`, …
pub fn corpus(points: &[(&str, Split)]) -> Corpus {
    Corpus::from_records(
        points
            .iter()
            .enumerate()
            .map(|(i, (label, split))| UtteranceRecord {
                id: format!("p{i}"),
                text: format!("text {i}"),
                gold_label: (*label).to_owned(),
                split: *split,
            })
            .collect(),
    )
}

pub fn matrix(rows: &[[f64; 2]]) -> EmbeddingMatrix<f64> {
    EmbeddingMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

/// The separated 20-class benchmark.
pub fn benchmark_spec(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_classes: 20,
        n_known: 5,
        points_per_class: 100,
        dim: 16,
        center_scale: 1.0,
        cluster_std: 0.05,
        seed,
        kappa: 10,
        test_fraction: 0.2,
    }
}

/// Two known classes and one new class of 8 pool points.
pub fn one_new_class() -> (Corpus, EmbeddingMatrix<f64>) {
    let mut points = vec![("A", Split::Init), ("A", Split::Init), ("B", Split::Init), ("B", Split::Init)];
    points.extend(std::iter::repeat_n(("N", Split::Pool), 8));
    // the new class sits in two tight groups of four, so K = 2 splits it evenly
    let rows = [
        [-5.0, 0.0],
        [-5.1, 0.0],
        [5.0, 0.0],
        [5.1, 0.0],
        [0.0, 3.0],
        [0.1, 3.0],
        [0.0, 3.1],
        [0.1, 3.1],
        [1.0, 3.0],
        [1.1, 3.0],
        [1.0, 3.1],
        [1.1, 3.1],
    ];
    (corpus(&points), matrix(&rows))
}
