use serde::{Deserialize, Serialize};

use super::{prepare, ClusterError, ClusterSet};
use crate::ingest::EmbeddingMatrix;
use crate::scalar::{sq_dist, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    #[default]
    Average,
    Complete,
}

/// Bottom-up merging on Euclidean distance until `k` clusters remain.
///
/// Clusters live in the slot of their smallest row, so ordering candidate
/// pairs by `(distance, lower slot, higher slot)` breaks ties by the pair of
/// smallest member rows.
pub fn agglomerative<T: Scalar>(
    ids: &[usize],
    x: &EmbeddingMatrix<T>,
    k: usize,
    linkage: Linkage,
) -> Result<ClusterSet<T>, ClusterError> {
    let rows = prepare(ids, k)?;
    let n = rows.len();
    let mut dist = vec![T::zero(); n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = sq_dist(x.row(rows[i]), x.row(rows[j])).sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut parent: Vec<usize> = (0..n).collect();

    let better = |d: T, a: usize, b: usize, best: Option<(T, usize, usize)>| match best {
        None => true,
        Some((bd, ba, bb)) => d < bd || (d == bd && (a.min(b), a.max(b)) < (ba.min(bb), ba.max(bb))),
    };
    let nn_of = |i: usize, dist: &[T], active: &[bool]| -> Option<(T, usize, usize)> {
        let mut best = None;
        for j in (0..n).filter(|&j| j != i && active[j]) {
            let d = dist[i * n + j];
            if better(d, i, j, best) {
                best = Some((d, i, j));
            }
        }
        best
    };
    let mut nn: Vec<Option<(T, usize, usize)>> = (0..n).map(|i| nn_of(i, &dist, &active)).collect();

    for _ in 0..n - k {
        let mut best: Option<(T, usize, usize)> = None;
        for cand in (0..n).filter(|&i| active[i]).filter_map(|i| nn[i]) {
            if better(cand.0, cand.1, cand.2, best) {
                best = Some(cand);
            }
        }
        let (_, a, b) = best.expect("at least two active clusters");
        let (keep, gone) = (a.min(b), a.max(b));
        for m in (0..n).filter(|&m| active[m] && m != keep && m != gone) {
            let dk = dist[keep * n + m];
            let dg = dist[gone * n + m];
            let merged = match linkage {
                Linkage::Average => {
                    let (sk, sg) = (T::from_usize_lossy(size[keep]), T::from_usize_lossy(size[gone]));
                    (sk * dk + sg * dg) / (sk + sg)
                }
                Linkage::Complete => dk.max(dg),
            };
            dist[keep * n + m] = merged;
            dist[m * n + keep] = merged;
        }
        size[keep] += size[gone];
        active[gone] = false;
        parent.iter_mut().filter(|p| **p == gone).for_each(|p| *p = keep);

        for m in (0..n).filter(|&m| active[m]) {
            let stale = match nn[m] {
                None => true,
                Some((_, _, j)) => m == keep || j == keep || j == gone,
            };
            if stale {
                nn[m] = nn_of(m, &dist, &active);
            } else if better(dist[m * n + keep], m, keep, nn[m]) {
                nn[m] = Some((dist[m * n + keep], m, keep));
            }
        }
    }

    // relabel surviving slots densely, in slot order
    let mut slot_label = vec![usize::MAX; n];
    let mut next = 0;
    for s in 0..n {
        if active[s] {
            slot_label[s] = next;
            next += 1;
        }
    }
    let labels: Vec<usize> = parent.iter().map(|&p| slot_label[p]).collect();
    Ok(ClusterSet::from_labels(&rows, &labels, k, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> EmbeddingMatrix<f64> {
        EmbeddingMatrix::from_rows(&points.iter().map(|&p| vec![p]).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn no_merges_when_k_is_n() {
        let x = line(&[0.0, 1.0, 2.0]);
        let set = agglomerative(&[0, 1, 2], &x, 3, Linkage::Average).unwrap();
        assert_eq!(set.members, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn square_average_linkage() {
        let x = EmbeddingMatrix::<f64>::from_rows(&[
            vec![0.0, 0.0],
            vec![0.0, 1.0],
            vec![10.0, 0.0],
            vec![10.0, 1.0],
        ])
        .unwrap();
        let set = agglomerative(&[0, 1, 2, 3], &x, 2, Linkage::Average).unwrap();
        assert_eq!(set.members, vec![vec![0, 1], vec![2, 3]]);
        assert!((set.inertia - 1.0).abs() < 1e-12);
    }

    #[test]
    fn collinear_complete_linkage() {
        // merges: {0,1} at 1 (tie with {1,2} broken by lower pair), then {0,1,2} at 2
        let x = line(&[0.0, 1.0, 2.0, 10.0]);
        let set = agglomerative(&[0, 1, 2, 3], &x, 2, Linkage::Complete).unwrap();
        assert_eq!(set.members, vec![vec![0, 1, 2], vec![3]]);
    }

    #[test]
    fn tie_break_prefers_lowest_pair() {
        // all gaps equal: first merge must be rows {0,1}
        let x = line(&[0.0, 1.0, 2.0, 3.0]);
        let set = agglomerative(&[0, 1, 2, 3], &x, 3, Linkage::Average).unwrap();
        assert_eq!(set.members, vec![vec![0, 1], vec![2], vec![3]]);
    }

    #[test]
    fn too_large_k() {
        let x = line(&[0.0]);
        assert_eq!(
            agglomerative(&[0], &x, 2, Linkage::Complete),
            Err(ClusterError::KTooLarge { k: 2, n: 1 })
        );
    }
}
