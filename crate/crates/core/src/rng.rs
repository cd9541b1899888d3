//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator seeded with
//! the run seed through `seed_from_u64`, with a fixed stream id per consumer.
//! ChaCha8 is a counter-based generator, so the same (seed, stream) pair
//! produces the same sequence on every platform.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids. New consumers take a new id; existing ids never change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Synthetic = 1,
    KMeans = 2,
    ClusterProbe = 3,
    GoldAnyPoint = 4,
    GoldFew = 5,
    RandomFew = 6,
    Classifier = 7,
}

pub fn stream(seed: u64, which: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

/// Sub-stream for repeated consumers (e.g. one k-means call per NCD round).
pub fn substream(seed: u64, which: Stream, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((which as u64) << 32) | (index & 0xffff_ffff));
    rng
}
