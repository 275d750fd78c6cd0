use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchConfig {
    pub batch_size: usize,
    pub bucket_size: usize,
    /// Longest target kept for training.
    pub max_len: usize,
}

impl Default for BatchConfig {
    fn default() -> Self {
        BatchConfig {
            batch_size: 16,
            bucket_size: 10,
            max_len: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batches {
    /// Instance indices per batch, in training order.
    pub batches: Vec<Vec<usize>>,
    /// Instances whose target exceeds `max_len`.
    pub dropped: Vec<usize>,
}

fn bucket(len: usize, size: usize) -> usize {
    len.div_ceil(size) * size
}

/// Groups instances by `(node count, target length)` rounded up to the
/// bucket size, shuffles each bucket, cuts it into batches and shuffles the
/// batch order. `sizes[i]` is `(nodes, target tokens)` of instance `i`.
pub fn make_batches(sizes: &[(usize, usize)], cfg: &BatchConfig, seed: u64, epoch: u64) -> Batches {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch);
    let mut buckets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut dropped = Vec::new();
    for (i, &(nodes, len)) in sizes.iter().enumerate() {
        if len > cfg.max_len {
            dropped.push(i);
            continue;
        }
        let key = (bucket(nodes, cfg.bucket_size), bucket(len, cfg.bucket_size));
        buckets.entry(key).or_default().push(i);
    }
    let mut batches = Vec::new();
    for members in buckets.values_mut() {
        members.shuffle(&mut rng);
        batches.extend(members.chunks(cfg.batch_size.max(1)).map(<[usize]>::to_vec));
    }
    batches.shuffle(&mut rng);
    Batches { batches, dropped }
}
