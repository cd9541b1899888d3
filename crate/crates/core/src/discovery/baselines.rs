use serde::{Deserialize, Serialize};

use super::DiscoveryError;
use crate::domain::ClassId;
use crate::oracle::{LabelState, Oracle, Phase};
use crate::rng::{stream, Stream};

/// A class that received fewer than the requested labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub class: ClassId,
    pub requested: usize,
    pub annotated: usize,
}

/// Annotates `f` seeded-random pool points of every class in `new_classes`,
/// choosing by gold label. Classes with fewer pool points get all of them and
/// a shortfall record; the batch is cut to the remaining budget.
pub fn gold_few(
    state: &mut LabelState,
    oracle: &mut Oracle<'_>,
    pool_rows: &[usize],
    f: usize,
    new_classes: &[ClassId],
    seed: u64,
) -> Result<Vec<Shortfall>, DiscoveryError> {
    let corpus = oracle.corpus();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); new_classes.len()];
    for &r in pool_rows {
        let gold = corpus
            .gold(r)
            .ok_or_else(|| DiscoveryError::MissingGold(corpus.record(r).id.clone()))?;
        if let Some(i) = new_classes.iter().position(|&c| c == gold) {
            if !state.pool.contains(r) {
                by_class[i].push(r);
            }
        }
    }
    let mut rng = stream(seed, Stream::GoldFew);
    let mut requests = Vec::new();
    let mut per_class = Vec::new();
    for rows in &mut by_class {
        rows.sort_unstable();
        let chosen = rand::seq::index::sample(&mut rng, rows.len(), f.min(rows.len()));
        let mut picked: Vec<usize> = chosen.into_iter().map(|i| rows[i]).collect();
        picked.sort_unstable();
        per_class.push(picked.len());
        requests.extend(picked.into_iter().map(|r| (r, None)));
    }
    requests.truncate(state.remaining());
    oracle.annotate(state, &requests, Phase::Baseline)?;

    let mut left = requests.len();
    let mut shortfalls = Vec::new();
    for (&class, n) in new_classes.iter().zip(per_class) {
        let annotated = n.min(left);
        left -= annotated;
        if annotated < f {
            shortfalls.push(Shortfall {
                class,
                requested: f,
                annotated,
            });
        }
    }
    Ok(shortfalls)
}

/// Annotates a seeded uniform sample of `n` unlabeled pool points.
pub fn random_few(
    state: &mut LabelState,
    oracle: &mut Oracle<'_>,
    pool_rows: &[usize],
    n: usize,
    seed: u64,
) -> Result<Vec<usize>, DiscoveryError> {
    let mut free: Vec<usize> = pool_rows
        .iter()
        .copied()
        .filter(|&r| !state.pool.contains(r))
        .collect();
    free.sort_unstable();
    if n > free.len() {
        return Err(DiscoveryError::SampleTooLarge {
            requested: n,
            available: free.len(),
        });
    }
    let mut rng = stream(seed, Stream::RandomFew);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, free.len(), n)
        .into_iter()
        .map(|i| free[i])
        .collect();
    picked.sort_unstable();
    let requests: Vec<(usize, Option<usize>)> = picked.iter().map(|&r| (r, None)).collect();
    oracle.annotate(state, &requests, Phase::Baseline)?;
    Ok(picked)
}
