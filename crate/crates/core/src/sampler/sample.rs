use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform sample without replacement of `min(n, len)` items, in draw order.
/// Partial Fisher-Yates over a ChaCha8 stream seeded with `seed`.
pub fn sample_candidates<T: Clone>(items: &[T], n: usize, seed: u64) -> Vec<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..items.len()).collect();
    let k = n.min(items.len());
    for i in 0..k {
        let j = rng.gen_range(i..idx.len());
        idx.swap(i, j);
    }
    idx[..k].iter().map(|&i| items[i].clone()).collect()
}
