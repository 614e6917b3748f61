//! Element-loop parallelism.
//!
//! All per-cell work in this crate (local kernels, load vectors, error
//! norms) is embarrassingly parallel over immutable mesh data. With the
//! `parallel` feature (default) these helpers fan out over rayon; without
//! it they degrade to plain iterators. Results are collected in index
//! order and reduced sequentially, so both paths produce bit-identical
//! output (a fixed summation order keeps study CSVs reproducible).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Always-sequential twin of [`map_indexed`]; the benchmark suite compares
/// the two.
pub fn map_indexed_serial<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Evaluates `f(i)` for `0..n` (in parallel when enabled) and sums the
/// results in index order.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    map_indexed(n, f).into_iter().sum()
}
