//! Bounded worker pool for per-utterance work.

use rayon::prelude::*;

/// Runs `f` on every item with at most `workers` threads and returns the
/// results in input order.
pub fn map_ordered<T, R, F>(workers: usize, items: &[T], f: F) -> anyhow::Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> anyhow::Result<R> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers.max(1)).build()?;
    pool.install(|| items.par_iter().map(&f).collect())
}
