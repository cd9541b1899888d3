use rand::Rng;

use super::{prepare, ClusterError, ClusterSet};
use crate::ingest::EmbeddingMatrix;
use crate::rng::{substream, Stream};
use crate::scalar::{sq_dist, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub seed: u64,
    /// Sub-stream of the seed, so repeated calls (restarts, NCD rounds)
    /// draw independent seeds.
    pub stream: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn seeded(seed: u64) -> Self {
        Self {
            seed,
            stream: 0,
            max_iter: 300,
            tol: 1e-6,
        }
    }
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self::seeded(0)
    }
}

pub fn kmeans<T: Scalar>(
    ids: &[usize],
    x: &EmbeddingMatrix<T>,
    k: usize,
    params: &KMeansParams,
) -> Result<ClusterSet<T>, ClusterError> {
    kmeans_traced(ids, x, k, params).map(|(set, _)| set)
}

fn nearest<T: Scalar>(p: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, sq_dist(p, &centroids[0]));
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn seed_centroids<T: Scalar>(
    rows: &[usize],
    x: &EmbeddingMatrix<T>,
    k: usize,
    params: &KMeansParams,
) -> Vec<Vec<T>> {
    let mut rng = substream(params.seed, Stream::KMeans, params.stream);
    let n = rows.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![x.row(rows[first]).to_vec()];
    let mut d2: Vec<f64> = rows
        .iter()
        .map(|&r| sq_dist(x.row(r), &centroids[0]).to_f64_lossy())
        .collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave the target just past the last positive weight
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        let c = x.row(rows[pick]).to_vec();
        for (w, &r) in d2.iter_mut().zip(rows) {
            *w = w.min(sq_dist(x.row(r), &c).to_f64_lossy());
        }
        centroids.push(c);
    }
    centroids
}

fn objective<T: Scalar>(
    rows: &[usize],
    labels: &[usize],
    centroids: &[Vec<T>],
    x: &EmbeddingMatrix<T>,
) -> T {
    rows.iter()
        .zip(labels)
        .fold(T::zero(), |acc, (&r, &l)| acc + sq_dist(x.row(r), &centroids[l]))
}

/// K-Means returning the final partition plus the objective after every
/// Lloyd iteration (non-increasing up to rounding).
pub fn kmeans_traced<T: Scalar>(
    ids: &[usize],
    x: &EmbeddingMatrix<T>,
    k: usize,
    params: &KMeansParams,
) -> Result<(ClusterSet<T>, Vec<T>), ClusterError> {
    let rows = prepare(ids, k)?;
    let mut centroids = seed_centroids(&rows, x, k, params);
    let mut labels = vec![usize::MAX; rows.len()];
    let mut history = Vec::new();
    let tol = T::from_f64_lossy(params.tol);

    for _ in 0..params.max_iter.max(1) {
        let mut dists = Vec::with_capacity(rows.len());
        let mut changed = false;
        for (i, &r) in rows.iter().enumerate() {
            let (j, d) = nearest(x.row(r), &centroids);
            changed |= labels[i] != j;
            labels[i] = j;
            dists.push(d);
        }

        // refill each empty cluster with the point farthest from its centroid
        let mut sizes = vec![0usize; k];
        labels.iter().for_each(|&l| sizes[l] += 1);
        for empty in 0..k {
            if sizes[empty] > 0 {
                continue;
            }
            let far = (0..rows.len())
                .filter(|&i| sizes[labels[i]] > 1)
                .fold(None::<usize>, |best, i| match best {
                    Some(b) if dists[b] >= dists[i] => Some(b),
                    _ => Some(i),
                })
                .expect("k <= n leaves a donor cluster");
            sizes[labels[far]] -= 1;
            labels[far] = empty;
            sizes[empty] = 1;
            dists[far] = T::zero();
            centroids[empty] = x.row(rows[far]).to_vec();
            changed = true;
        }

        let mut sums = vec![vec![T::zero(); x.dim()]; k];
        for (&r, &l) in rows.iter().zip(&labels) {
            for (s, &v) in sums[l].iter_mut().zip(x.row(r)) {
                *s = *s + v;
            }
        }
        let mut shift = T::zero();
        for (j, s) in sums.into_iter().enumerate() {
            let n = T::from_usize_lossy(sizes[j]);
            let next: Vec<T> = s.into_iter().map(|v| v / n).collect();
            let moved = sq_dist(&next, &centroids[j]).sqrt();
            if moved > shift {
                shift = moved;
            }
            centroids[j] = next;
        }
        history.push(objective(&rows, &labels, &centroids, x));
        if shift < tol || !changed {
            break;
        }
    }

    Ok((ClusterSet::from_labels(&rows, &labels, k, x), history))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ])
        .unwrap()
    }

    #[test]
    fn two_pairs() {
        let x = square();
        let set = kmeans(&[0, 1, 2, 3], &x, 2, &KMeansParams::seeded(3)).unwrap();
        let mut parts = set.members.clone();
        parts.sort();
        assert_eq!(parts, vec![vec![0, 1], vec![2, 3]]);
        let mut cents = set.centroids.clone();
        cents.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(cents, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
        assert!((set.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let x = square();
        let set = kmeans(&[0, 1, 2, 3], &x, 1, &KMeansParams::seeded(0)).unwrap();
        assert_eq!(set.centroids[0], vec![5.0, 0.5]);
        // per-axis variances 25 and 0.25, times n = 4
        assert!((set.inertia - 4.0 * 25.25).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let x = square();
        let set = kmeans(&[3, 2, 1, 0], &x, 4, &KMeansParams::seeded(11)).unwrap();
        assert!(set.members.iter().all(|m| m.len() == 1));
        assert_eq!(set.inertia, 0.0);
    }

    #[test]
    fn duplicate_points_still_fill_every_cluster() {
        let x = EmbeddingMatrix::<f64>::from_rows(&vec![vec![1.0, 1.0]; 5]).unwrap();
        let set = kmeans(&[0, 1, 2, 3, 4], &x, 3, &KMeansParams::seeded(1)).unwrap();
        assert_eq!(set.k(), 3);
        assert!(set.members.iter().all(|m| !m.is_empty()));
    }

    #[test]
    fn errors() {
        let x = square();
        assert_eq!(
            kmeans(&[0, 1], &x, 3, &KMeansParams::default()),
            Err(ClusterError::KTooLarge { k: 3, n: 2 })
        );
        assert_eq!(
            kmeans(&[], &x, 1, &KMeansParams::default()),
            Err(ClusterError::EmptyInput)
        );
    }

    #[test]
    fn works_in_single_precision() {
        let x = square().cast::<f32>();
        let set = kmeans(&[0, 1, 2, 3], &x, 2, &KMeansParams::seeded(3)).unwrap();
        assert!((set.inertia - 1.0f32).abs() < 1e-6);
    }
}
