//! Data-parallel map helpers. With the `rayon` feature (default) the indexed
//! maps fan out over the global thread pool; without it they fall back to the
//! sequential loop. Outputs are index-ordered either way, so results do not
//! depend on scheduling.

#[cfg(feature = "rayon")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `rayon` feature is enabled.
#[cfg(feature = "rayon")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Maps `f` over `0..n` sequentially (the `rayon` feature is disabled).
#[cfg(not(feature = "rayon"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Always-sequential sibling of [`map_indexed`]; kept public so benchmarks
/// can compare the two paths under identical workloads.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Derives the seed of job `index` from a master seed: splitmix64 applied to
/// `master + index * golden`. Any single job can be reproduced in isolation
/// from the master seed and its index alone.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Caps the worker pool, e.g. from a CLI `--threads`/env override. A no-op
/// without the `rayon` feature or after the pool already started.
pub fn configure_threads(threads: Option<usize>) {
    #[cfg(feature = "rayon")]
    if let Some(n) = threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "rayon"))]
    let _ = threads;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree_in_order() {
        let f = |i: usize| i * i;
        assert_eq!(map_indexed(100, f), map_indexed_seq(100, f));
    }
}
