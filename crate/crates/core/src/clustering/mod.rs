//! Clustering over embedding rows: seeded K-Means (k-means++ seeding, Lloyd
//! iterations) and agglomerative clustering with average or complete linkage.
//!
//! Both algorithms sort their input rows first, so the result depends only on
//! the set of rows, never on the order they were passed in.

mod agglomerative;
mod kmeans;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::EmbeddingMatrix;
use crate::scalar::{sq_dist, Scalar};

pub use agglomerative::{agglomerative, Linkage};
pub use kmeans::{kmeans, kmeans_traced, KMeansParams};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClusterError {
    #[error("no points to cluster")]
    EmptyInput,
    #[error("K must be positive")]
    ZeroK,
    #[error("K = {k} exceeds the {n} input points")]
    KTooLarge { k: usize, n: usize },
    #[error("row {0} appears twice in the input")]
    DuplicateRow(usize),
}

/// A partition of rows into `k` non-empty clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSet<T> {
    /// Rows of each cluster, ascending.
    pub members: Vec<Vec<usize>>,
    pub assignment: BTreeMap<usize, usize>,
    pub centroids: Vec<Vec<T>>,
    pub inertia: T,
}

impl<T: Scalar> ClusterSet<T> {
    pub fn k(&self) -> usize {
        self.members.len()
    }

    pub fn cluster_of(&self, row: usize) -> Option<usize> {
        self.assignment.get(&row).copied()
    }

    /// Builds the set from sorted rows and their cluster labels, computing
    /// centroids and inertia. Every label in `0..k` must be used.
    pub(crate) fn from_labels(
        rows: &[usize],
        labels: &[usize],
        k: usize,
        x: &EmbeddingMatrix<T>,
    ) -> Self {
        let mut members = vec![Vec::new(); k];
        let mut assignment = BTreeMap::new();
        for (&r, &l) in rows.iter().zip(labels) {
            members[l].push(r);
            assignment.insert(r, l);
        }
        let centroids: Vec<Vec<T>> = members.iter().map(|m| mean_of(m, x)).collect();
        let inertia = members
            .iter()
            .zip(&centroids)
            .flat_map(|(m, c)| m.iter().map(move |&r| sq_dist(x.row(r), c)))
            .fold(T::zero(), |a, b| a + b);
        Self {
            members,
            assignment,
            centroids,
            inertia,
        }
    }

    /// Members of `cluster` sorted by distance to its centroid, ties by row.
    pub fn by_centroid_distance(&self, cluster: usize, x: &EmbeddingMatrix<T>) -> Vec<usize> {
        let c = &self.centroids[cluster];
        let mut rows: Vec<(T, usize)> = self.members[cluster]
            .iter()
            .map(|&r| (sq_dist(x.row(r), c), r))
            .collect();
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        rows.into_iter().map(|(_, r)| r).collect()
    }
}

pub(crate) fn mean_of<T: Scalar>(rows: &[usize], x: &EmbeddingMatrix<T>) -> Vec<T> {
    let mut acc = vec![T::zero(); x.dim()];
    for &r in rows {
        for (a, &v) in acc.iter_mut().zip(x.row(r)) {
            *a = *a + v;
        }
    }
    let n = T::from_usize_lossy(rows.len().max(1));
    acc.into_iter().map(|a| a / n).collect()
}

/// Sorted copy of the input, rejecting duplicates and bad K.
pub(crate) fn prepare(ids: &[usize], k: usize) -> Result<Vec<usize>, ClusterError> {
    if ids.is_empty() {
        return Err(ClusterError::EmptyInput);
    }
    if k == 0 {
        return Err(ClusterError::ZeroK);
    }
    let mut rows = ids.to_vec();
    rows.sort_unstable();
    if let Some(w) = rows.windows(2).find(|w| w[0] == w[1]) {
        return Err(ClusterError::DuplicateRow(w[0]));
    }
    if k > rows.len() {
        return Err(ClusterError::KTooLarge { k, n: rows.len() });
    }
    Ok(rows)
}

/// Which clustering algorithm a run uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "algorithm")]
pub enum Clusterer {
    #[default]
    Kmeans,
    Agglomerative {
        #[serde(default)]
        linkage: Linkage,
    },
}

impl Clusterer {
    pub fn cluster<T: Scalar>(
        &self,
        ids: &[usize],
        x: &EmbeddingMatrix<T>,
        k: usize,
        seed: u64,
        stream: u64,
    ) -> Result<ClusterSet<T>, ClusterError> {
        match *self {
            Clusterer::Kmeans => kmeans(ids, x, k, &KMeansParams::seeded(seed).with_stream(stream)),
            Clusterer::Agglomerative { linkage } => agglomerative(ids, x, k, linkage),
        }
    }
}
