//! Sequential / multi-worker execution of independent per-client work.
//!
//! Work items between two barriers never share mutable state, so both modes
//! produce bit-identical results.  Without the `parallel` feature the
//! parallel mode silently runs sequentially.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecMode {
    /// Client-id order on the calling thread.
    #[default]
    Sequential,
    /// Rayon work-stealing pool.
    Parallel,
}

impl ExecMode {
    /// Applies `f` to every element, returning results in input order.
    pub fn map_mut<T, R, F>(self, items: &mut [T], f: F) -> Vec<R>
    where
        T: Send,
        R: Send,
        F: Fn(&mut T) -> R + Sync + Send,
    {
        match self {
            ExecMode::Sequential => items.iter_mut().map(f).collect(),
            ExecMode::Parallel => par_map_mut(items, f),
        }
    }

    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            ExecMode::Sequential => items.iter().map(f).collect(),
            ExecMode::Parallel => par_map(items, f),
        }
    }
}

/// Runs `f` with parallel work confined to a pool of `workers` threads.
/// Without the `parallel` feature, or with `workers == 0`, `f` runs as is.
pub fn with_workers<R: Send>(workers: usize, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    if workers > 0 {
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(f);
        }
    }
    let _ = workers;
    f()
}

#[cfg(feature = "parallel")]
fn par_map_mut<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(&mut T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter_mut().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map_mut<T, R, F>(items: &mut [T], f: F) -> Vec<R>
where
    T: Send,
    R: Send,
    F: Fn(&mut T) -> R + Sync + Send,
{
    items.iter_mut().map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    items.par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    items.iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree_and_keep_order() {
        let mut a: Vec<u64> = (0..100).collect();
        let mut b = a.clone();
        let ra = ExecMode::Sequential.map_mut(&mut a, |x| {
            *x *= 3;
            *x + 1
        });
        let rb = ExecMode::Parallel.map_mut(&mut b, |x| {
            *x *= 3;
            *x + 1
        });
        assert_eq!(a, b);
        assert_eq!(ra, rb);
        assert_eq!(ra[10], 31);
    }
}
