//! Data-parallel map helpers.
//!
//! Parameter points, bridge intervals, and batched solves are independent
//! given immutable shared inputs, so they fan out with rayon when the
//! `parallel` feature (default) is enabled. With the feature disabled the same
//! entry points run sequentially. `map_seq` is always sequential and exists so
//! benchmarks can compare both paths in one build.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `items`, in parallel when the `parallel` feature is on.
pub fn map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Always-sequential map with the same signature as [`map`].
pub fn map_seq<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> U + Sync + Send) -> Vec<U> {
    items.iter().map(f).collect()
}

/// True when this build fans work out with rayon.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

/// Configure the global thread pool (no-op without the `parallel` feature).
pub fn configure_threads(n: usize) {
    #[cfg(feature = "parallel")]
    {
        if n > 0 {
            // Ignore the error when a pool already exists; tests may race.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = n;
    }
}
