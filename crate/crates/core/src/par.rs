//! Data-parallel dispatch helper.
//!
//! With the `parallel` feature (default) independent work items run on the
//! rayon pool; without it, or when a plan opts out, they run sequentially.
//! Results are collected in index order either way, so outputs are
//! bit-identical across both paths and any thread count.

/// Whether parallel execution is compiled in.
pub fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

/// Sizes the global thread pool; returns false if unavailable (sequential
/// build) or already initialized.
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> bool {
    false
}

#[cfg(feature = "parallel")]
pub(crate) fn map_indexed<T, F>(parallel: bool, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    if parallel && n > 1 {
        (0..n).into_par_iter().map(f).collect()
    } else {
        (0..n).map(f).collect()
    }
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn map_indexed<T, F>(_parallel: bool, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}
