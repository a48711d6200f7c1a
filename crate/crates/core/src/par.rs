//! Ordered map over an index range, on a rayon pool when the `parallel`
//! feature is enabled and more than one worker is requested.
//!
//! Results always come back in index order, so any reduction done by the
//! caller over the returned vector is independent of the worker count.

/// Evaluates `f(0..n)` and returns the results in index order.
///
/// `threads == 1` always runs on the calling thread. `threads == 0` lets
/// rayon pick the worker count, falling back to the calling thread when the
/// global pool has a single worker.
pub fn ordered_map<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if threads != 1 && !(threads == 0 && rayon::current_num_threads() == 1) {
            use rayon::prelude::*;
            let run = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
            if threads == 0 {
                return run();
            }
            match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                Ok(pool) => return pool.install(run),
                Err(e) => log::warn!("could not build a {threads}-thread pool ({e}); running sequentially"),
            }
        }
    }
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    (0..n).map(f).collect()
}

/// Whether this build can run work on more than one thread.
pub const fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}
