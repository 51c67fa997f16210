//! Execution policy shared by the estimators.
//!
//! With the `parallel` feature (default) work is spread over a dedicated rayon
//! pool of the requested size. Without it every policy runs on the calling
//! thread. Results never depend on the policy: all parallel reductions in this
//! crate are over integer counts or fixed-order index ranges.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    #[default]
    Sequential,
    Parallel {
        workers: usize,
    },
}

impl Execution {
    pub fn with_workers(workers: usize) -> Result<Self> {
        match workers {
            0 => Err(Error::invalid("worker count must be at least 1")),
            1 => Ok(Execution::Sequential),
            w => Ok(Execution::Parallel { workers: w }),
        }
    }

    pub fn workers(&self) -> usize {
        match *self {
            Execution::Sequential => 1,
            Execution::Parallel { workers } => workers,
        }
    }

    /// Maps `f` over `0..len` and returns the results in index order.
    pub fn map_range<T, F>(&self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Send + Sync,
    {
        match *self {
            Execution::Sequential => (0..len).map(f).collect(),
            Execution::Parallel { workers } => par_map_range(workers, len, f),
        }
    }

    /// Runs `f` on each `(index, chunk)` of `data` split into `chunk_len` pieces.
    pub fn for_each_chunk_mut<T, F>(&self, data: &mut [T], chunk_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Send + Sync,
    {
        match *self {
            Execution::Sequential => data
                .chunks_mut(chunk_len)
                .enumerate()
                .for_each(|(i, c)| f(i, c)),
            Execution::Parallel { workers } => par_chunks_mut(workers, data, chunk_len, f),
        }
    }
}

/// Pools are cached per worker count; building one per call would dominate
/// short per-layer loops.
#[cfg(feature = "parallel")]
fn with_pool<R: Send>(workers: usize, op: impl FnOnce() -> R + Send) -> R {
    use std::collections::HashMap;
    use std::sync::{Arc, Mutex, OnceLock};

    static POOLS: OnceLock<Mutex<HashMap<usize, Arc<rayon::ThreadPool>>>> = OnceLock::new();
    let pool = {
        let mut pools = POOLS
            .get_or_init(Default::default)
            .lock()
            .unwrap_or_else(|e| e.into_inner());
        match pools.get(&workers) {
            Some(p) => Some(Arc::clone(p)),
            None => rayon::ThreadPoolBuilder::new()
                .num_threads(workers)
                .build()
                .ok()
                .map(|p| Arc::clone(pools.entry(workers).or_insert(Arc::new(p)))),
        }
    };
    match pool {
        Some(pool) => pool.install(op),
        // pool creation only fails on OS thread exhaustion; fall back to the global pool
        None => op(),
    }
}

#[cfg(feature = "parallel")]
fn par_map_range<T, F>(workers: usize, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    use rayon::prelude::*;
    with_pool(workers, || (0..len).into_par_iter().map(f).collect())
}

#[cfg(not(feature = "parallel"))]
fn par_map_range<T, F>(_workers: usize, len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Send + Sync,
{
    (0..len).map(f).collect()
}

#[cfg(feature = "parallel")]
fn par_chunks_mut<T, F>(workers: usize, data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    use rayon::prelude::*;
    with_pool(workers, || {
        data.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c))
    })
}

#[cfg(not(feature = "parallel"))]
fn par_chunks_mut<T, F>(_workers: usize, data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, c)| f(i, c))
}
