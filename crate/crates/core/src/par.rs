//! Data-parallel helpers with a sequential fallback.
//!
//! Hot loops in the crate take an [`Execution`] so the same code path can be
//! run (and benchmarked) both ways. Without the `parallel` feature every
//! request is served sequentially.

/// How a data-parallel loop should be executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

impl Execution {
    /// True when this request will actually fan out to worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }
}

/// Evaluates `f` on `0..n` and collects the results in index order.
pub fn map_range<T, F>(n: usize, exec: Execution, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Sum of `f` over `0..n`. Integer sums are order independent, so the result
/// does not depend on the execution mode.
pub fn sum_range_u64<F>(n: usize, exec: Execution, f: F) -> u64
where
    F: Fn(usize) -> u64 + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        if exec.is_parallel() {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).sum();
        }
    }
    let _ = exec;
    (0..n).map(f).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let a = map_range(100, Execution::Sequential, |i| i * i);
        let b = map_range(100, Execution::Parallel, |i| i * i);
        assert_eq!(a, b);
        assert_eq!(
            sum_range_u64(1000, Execution::Sequential, |i| i as u64),
            sum_range_u64(1000, Execution::Parallel, |i| i as u64)
        );
    }
}
