//! Data-parallel map over trajectory indices.
//!
//! With the `parallel` feature the work is spread over the current rayon pool;
//! without it (or with [`ExecMode::Sequential`]) indices run in order on the
//! calling thread. Results are always returned in index order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ExecMode {
    #[default]
    Parallel,
    Sequential,
}

impl ExecMode {
    /// Whether this mode actually runs concurrently in the current build.
    pub fn is_concurrent(self) -> bool {
        cfg!(feature = "parallel") && self == ExecMode::Parallel
    }
}

pub fn par_map<T, F>(n: usize, mode: ExecMode, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "parallel")]
    if mode == ExecMode::Parallel {
        return (0..n).into_par_iter().map(&f).collect();
    }
    let _ = mode;
    (0..n).map(f).collect()
}
