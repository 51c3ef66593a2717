//! Order-preserving data-parallel maps with a sequential fallback.
//!
//! Callers always receive results in input order and perform any floating
//! point reduction sequentially over that order, so numbers do not depend on
//! the worker layout.

/// Batches smaller than this run sequentially even with the feature on; the
/// square-root-measurement rebuild loop hands out batches of a few
/// medium-sized matrix products, where dispatch latency outweighs the win.
const MIN_PARALLEL_LEN: usize = 16;

#[cfg(feature = "parallel")]
pub(crate) fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    if items.len() < MIN_PARALLEL_LEN {
        items.iter().map(f).collect()
    } else {
        items.par_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_collect<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

#[cfg(feature = "parallel")]
pub(crate) fn map_range<U, F>(count: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    use rayon::prelude::*;
    if count < MIN_PARALLEL_LEN {
        (0..count).map(f).collect()
    } else {
        (0..count).into_par_iter().map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_range<U, F>(count: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..count).map(f).collect()
}
