use crate::rng::Rng64;

/// Splits a seeded permutation of `0..n` into batches of `batch_size`.
/// The final short batch is kept.
pub fn batch_iter(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..n).collect();
    Rng64::new(seed).shuffle(&mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
