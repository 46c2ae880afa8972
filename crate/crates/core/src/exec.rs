//! Switch between sequential and data-parallel evaluation loops.
//!
//! Without the `parallel` feature both variants run sequentially, so callers
//! never need their own `cfg` gates.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    #[default]
    Sequential,
    Parallel,
}

impl Execution {
    /// `Parallel` when more than one thread is requested (0 means all cores).
    pub fn from_threads(threads: usize) -> Self {
        if threads == 1 {
            Execution::Sequential
        } else {
            Execution::Parallel
        }
    }

    /// Order-preserving map over a slice.
    pub fn map<T, R, F>(self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        match self {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                items.par_iter().map(f).collect()
            }
            _ => items.iter().map(f).collect(),
        }
    }

    /// Run `f` inside a pool of `threads` workers (0 = rayon default).
    pub fn install<R: Send>(threads: usize, f: impl FnOnce() -> R + Send) -> R {
        #[cfg(feature = "parallel")]
        {
            if threads != 1 {
                let mut builder = rayon::ThreadPoolBuilder::new();
                if threads > 1 {
                    builder = builder.num_threads(threads);
                }
                if let Ok(pool) = builder.build() {
                    return pool.install(f);
                }
            }
        }
        let _ = threads;
        f()
    }
}
