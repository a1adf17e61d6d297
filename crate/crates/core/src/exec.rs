//! Execution mode for the data-parallel inner loops.
//!
//! Every hot loop in the crate (conflict sweeps, per-point error evaluation,
//! dataset generation, quadrature and Monte Carlo sums) goes through the
//! helpers in this module. With the `parallel` feature enabled they dispatch
//! to rayon; otherwise, or when [`Exec::Sequential`] is requested, they run on
//! the calling thread. Results are identical in both modes: maps preserve
//! order and reductions are folded sequentially over the collected values.

use serde::{Deserialize, Serialize};

/// How a data-parallel loop should be executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Exec {
    /// Run on the calling thread.
    Sequential,
    /// Use the rayon thread pool when compiled with the `parallel` feature.
    #[default]
    Parallel,
}

impl Exec {
    /// True if this mode will actually fan out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Order-preserving map over `0..len`.
    pub fn map_range<T, F>(self, len: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..len).into_par_iter().map(f).collect();
        }
        (0..len).map(f).collect()
    }

    /// Order-preserving map over a slice.
    pub fn map_slice<S, T, F>(self, items: &[S], f: F) -> Vec<T>
    where
        S: Sync,
        T: Send,
        F: Fn(&S) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// True if `pred` holds for any index in `0..len`.
    pub fn any_range<F>(self, len: usize, pred: F) -> bool
    where
        F: Fn(usize) -> bool + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            use rayon::prelude::*;
            return (0..len).into_par_iter().any(pred);
        }
        (0..len).any(pred)
    }

    /// Runs two closures, concurrently when parallel.
    pub fn join<A, B, RA, RB>(self, a: A, b: B) -> (RA, RB)
    where
        A: FnOnce() -> RA + Send,
        B: FnOnce() -> RB + Send,
        RA: Send,
        RB: Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return rayon::join(a, b);
        }
        (a(), b())
    }
}
