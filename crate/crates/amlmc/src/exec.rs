use amlmc_core::Executor;
use rayon::prelude::*;
use std::time::Instant;

/// Sample tasks on a rayon pool. Results come back in task order, so every
/// reduction over them is independent of scheduling.
pub struct Pool {
    pool: rayon::ThreadPool,
    start: Instant,
}

impl Pool {
    /// `threads == 0` uses one worker per core.
    pub fn new(threads: usize) -> Result<Self, rayon::ThreadPoolBuildError> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Pool { pool, start: Instant::now() })
    }

    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl Executor for Pool {
    fn map<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        self.pool.install(|| (0..n).into_par_iter().map(f).collect())
    }

    fn seconds(&self) -> Option<f64> {
        Some(self.start.elapsed().as_secs_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_task_order() {
        let p = Pool::new(3).unwrap();
        assert_eq!(p.map(100, |i| i * i), (0..100).map(|i| i * i).collect::<Vec<_>>());
        assert!(p.seconds().unwrap() >= 0.0);
    }
}
