//! Data-parallel helpers. With the `parallel` feature (default), `par_map`
//! fans out over rayon; without it, everything runs sequentially. Results are
//! assembled in input order either way, so outputs are bit-identical across
//! the two modes and across thread counts.

/// Maps `f` over `items`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn par_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    seq_map(items, f)
}

/// Always-sequential map with the same signature; the fallback path and the
/// baseline side of the benchmarks.
pub fn seq_map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Caps the global rayon pool from the `RELNN_THREADS` environment variable.
/// Returns the applied cap, if any. A no-op without the `parallel` feature or
/// when the pool is already initialized.
pub fn configure_threads_from_env() -> Option<usize> {
    let requested: usize = std::env::var("RELNN_THREADS").ok()?.parse().ok()?;
    if requested == 0 {
        return None;
    }
    #[cfg(feature = "parallel")]
    {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(requested)
            .build_global();
    }
    Some(requested)
}
