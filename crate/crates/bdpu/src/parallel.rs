//! Replica-parallel map with a sequential fallback.
//!
//! Results come back in index order, so callers can fold them sequentially
//! and get bit-identical output whatever the thread count. Built without the
//! `parallel` feature, the same API runs on the current thread.

/// Evaluates `f(0), .., f(count - 1)` and returns the results in order.
#[cfg(feature = "parallel")]
pub fn par_map_collect<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map_collect<T, F>(count: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    seq_map_collect(count, f)
}

/// Always-sequential twin of [`par_map_collect`], kept available so the
/// benchmark suite can compare the two paths within one build.
pub fn seq_map_collect<T, F>(count: u64, f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    (0..count).map(f).collect()
}
