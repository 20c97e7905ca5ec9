//! Data-parallel execution with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it, or with [`Execution::Sequential`], the same closures run in
//! order on the calling thread. Output order always follows input order.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Execution {
    Sequential,
    /// `threads == 0` uses the global rayon pool.
    Parallel { threads: usize },
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel { threads: 0 }
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && matches!(self, Execution::Parallel { .. })
    }

    /// Applies `f` to every index in `0..len` and collects in index order.
    pub fn map_indexed<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel { threads } => {
                use rayon::prelude::*;
                let run = || (0..len).into_par_iter().map(&f).collect();
                if threads == 0 {
                    run()
                } else {
                    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
                        Ok(pool) => pool.install(run),
                        Err(e) => {
                            tracing::warn!("thread pool unavailable ({e}); running sequentially");
                            (0..len).map(&f).collect()
                        }
                    }
                }
            }
            _ => (0..len).map(f).collect(),
        }
    }
}
