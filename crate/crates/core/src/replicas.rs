//! Replica-parallel execution with scheduling-independent output.

use rayon::prelude::*;

/// Evaluate `f(0), ..., f(count - 1)` on `workers` threads (0 = rayon's
/// default) and return the results in replica order. As long as `f` is a
/// pure function of its index the output does not depend on `workers`.
pub fn run_replicas<T, F>(count: u64, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    if workers == 1 || count <= 1 {
        return (0..count).map(f).collect();
    }
    let work = || (0..count).into_par_iter().map(&f).collect();
    if workers == 0 {
        return work();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(work),
        // thread spawn failure: fall back to the calling thread
        Err(_) => (0..count).map(f).collect(),
    }
}

/// Fallible variant; the first error in replica order wins.
pub fn try_run_replicas<T, E, F>(count: u64, workers: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(u64) -> Result<T, E> + Sync + Send,
{
    run_replicas(count, workers, f).into_iter().collect()
}
