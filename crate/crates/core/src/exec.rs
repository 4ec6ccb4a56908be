//! Order-preserving fan-out. With the `parallel` feature and `jobs > 1` work
//! runs on a scoped rayon pool; otherwise it runs inline. Results come back
//! in input order either way, so outputs never depend on the worker count.

use crate::error::Result;

/// Worker count to use when the caller passes 0.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

pub fn ordered_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    let jobs = if jobs == 0 { default_jobs() } else { jobs };
    #[cfg(feature = "parallel")]
    if jobs > 1 && items.len() > 1 {
        use rayon::prelude::*;
        match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
            Ok(pool) => return pool.install(|| items.par_iter().map(&f).collect()),
            Err(e) => log::warn!("falling back to sequential execution: {e}"),
        }
    }
    let _ = jobs;
    items.iter().map(f).collect()
}

/// Like [`ordered_map`], reporting the first error in input order.
pub fn try_ordered_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    ordered_map(items, jobs, f).into_iter().collect()
}
