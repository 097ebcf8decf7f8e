//! Independent trials, each seeded from `split(root, index)`.
//!
//! With the `parallel` feature trials run on the rayon pool; results are returned in trial order
//! either way, so output never depends on scheduling.

use crate::seed::split;

/// Runs `f(index, seed)` for every trial in parallel, in trial order.
#[cfg(feature = "parallel")]
pub fn map_trials<T, F>(root: u64, trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..trials)
        .into_par_iter()
        .map(|i| f(i, split(root, i)))
        .collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_trials<T, F>(root: u64, trials: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64, u64) -> T + Sync + Send,
{
    map_trials_seq(root, trials, f)
}

/// Runs `f(index, seed)` for every trial on the calling thread.
pub fn map_trials_seq<T, F>(root: u64, trials: u64, f: F) -> Vec<T>
where
    F: Fn(u64, u64) -> T,
{
    (0..trials).map(|i| f(i, split(root, i))).collect()
}
