//! Batch execution strategy. Per-graph work (forward/backward, structure
//! extraction, prediction) is independent across a batch, so it maps cleanly
//! onto rayon. Results are collected in input order and reduced sequentially,
//! which keeps every float identical whether the `parallel` feature is on,
//! off, or running under any thread count (`RAYON_NUM_THREADS`).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, preserving order. Parallel when the `parallel`
/// feature is enabled, sequential otherwise.
#[cfg(feature = "parallel")]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync,
{
    items.par_iter().map(&f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_ordered<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(&f).collect()
}

/// Sequential map with the same signature, kept unconditionally for the
/// benchmark suite that compares both execution paths.
pub fn map_ordered_seq<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(&f).collect()
}
