//! Deterministic fan-out for batch stages.
//!
//! `map_indexed` applies `f` to every item and returns results in input
//! order, so callers observe identical output no matter how many worker
//! threads ran. With the `parallel` feature a dedicated rayon pool of
//! exactly `parallelism` threads bounds the number of in-flight calls;
//! without it (or with `parallelism <= 1`) execution is sequential.

/// Map over `items`, preserving input order in the result.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    if parallelism <= 1 || items.len() <= 1 {
        return map_sequential(items, f);
    }
    pool_for(parallelism).install(|| {
        use rayon::prelude::*;
        items.par_iter().enumerate().map(|(i, item)| f(i, item)).collect()
    })
}

/// Pools are cached per thread count; batch stages are called per
/// trajectory, and rebuilding a pool each time dominates small workloads.
#[cfg(feature = "parallel")]
fn pool_for(parallelism: usize) -> std::sync::Arc<rayon::ThreadPool> {
    use std::collections::BTreeMap;
    use std::sync::{Arc, Mutex, OnceLock};
    static POOLS: OnceLock<Mutex<BTreeMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let pools = POOLS.get_or_init(|| Mutex::new(BTreeMap::new()));
    let mut map = pools.lock().expect("pool registry lock");
    Arc::clone(map.entry(parallelism).or_insert_with(|| {
        Arc::new(
            rayon::ThreadPoolBuilder::new()
                .num_threads(parallelism)
                .build()
                .expect("building a rayon pool only fails on invalid configuration"),
        )
    }))
}

/// Sequential fallback used when the `parallel` feature is disabled.
#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, R, F>(items: &[T], _parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    map_sequential(items, f)
}

/// Plain in-order map. Exposed so benchmarks can pit it against the
/// parallel path directly.
pub fn map_sequential<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R,
{
    items.iter().enumerate().map(|(i, item)| f(i, item)).collect()
}
