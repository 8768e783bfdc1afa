//! Execution of independent sample tasks.

use alloc::vec::Vec;

/// Runs `n` independent tasks and returns their results in index order.
///
/// Implementations may evaluate tasks concurrently; the returned vector must
/// always be ordered by task index so that reductions are deterministic.
pub trait Executor: Sync {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;

    /// Monotonic wall clock in seconds, when the platform has one.
    fn seconds(&self) -> Option<f64> {
        None
    }
}

/// Evaluates tasks one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}
