//! Worker-pool helpers. Results are always collected in task order so that
//! outputs are identical for any worker count.

use rayon::prelude::*;

/// Runs `f` inside a pool of `workers` threads (0 = rayon default).
pub fn with_workers<R: Send, F: FnOnce() -> R + Send>(workers: usize, f: F) -> R {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Ordered parallel map over `0..count`.
pub fn map_indexed<T: Send, F: Fn(usize) -> T + Sync + Send>(count: usize, f: F) -> Vec<T> {
    (0..count).into_par_iter().map(f).collect()
}
