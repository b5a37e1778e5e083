//! Seeded, chunked execution.
//!
//! Bulk random work is split into fixed-size chunks and every chunk draws
//! from its own ChaCha stream keyed by `(seed, chunk index)`. Results are
//! therefore identical whether chunks run on a rayon pool or sequentially
//! (the `parallel` feature only changes scheduling).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub type ChunkRng = ChaCha8Rng;

/// Number of draws handled by one chunk stream.
pub const CHUNK_LEN: usize = 1 << 14;

pub fn chunk_rng(seed: u64, chunk: u64) -> ChunkRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent child seed from `seed` and a tag.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Derives a child seed from a list of tags (e.g. float bit patterns).
pub fn derive_seed_from(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(seed, |acc, &t| derive_seed(acc, t))
}

/// Fills `out` chunk by chunk, handing each chunk its own stream.
pub fn fill_seeded<F>(seed: u64, out: &mut [f64], f: F)
where
    F: Fn(&mut ChunkRng, &mut [f64]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    out.par_chunks_mut(CHUNK_LEN)
        .enumerate()
        .for_each(|(i, chunk)| f(&mut chunk_rng(seed, i as u64), chunk));
    #[cfg(not(feature = "parallel"))]
    out.chunks_mut(CHUNK_LEN)
        .enumerate()
        .for_each(|(i, chunk)| f(&mut chunk_rng(seed, i as u64), chunk));
}

/// Evaluates `f(0..n)` and returns the results in index order.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Maps over a slice, preserving order.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Number of worker threads the current execution mode will use.
pub fn threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn fill_is_independent_of_scheduling() {
        let mut a = vec![0.0; 3 * CHUNK_LEN + 17];
        fill_seeded(7, &mut a, |rng, c| c.iter_mut().for_each(|v| *v = rng.random()));
        let mut b = vec![0.0; a.len()];
        for (i, chunk) in b.chunks_mut(CHUNK_LEN).enumerate() {
            let mut rng = chunk_rng(7, i as u64);
            chunk.iter_mut().for_each(|v| *v = rng.random());
        }
        assert_eq!(a, b);
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed_from(5, &[1, 2]), derive_seed(derive_seed(5, 1), 2));
    }
}
