//! Execution helpers: data-parallel maps with a sequential fallback.
//!
//! Everything hot in this crate is a map over independent items (node pairs,
//! eigenpairs, random starts, time-grid entries). These helpers keep rayon
//! usage behind one seam so the `parallel` feature can swap it out, and so
//! reductions stay deterministic: results are collected in input order and
//! folded sequentially by the caller. Never reduce floating-point sums inside
//! the parallel layer.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Re-exported so benchmarks can pin thread pools without their own
/// dependency on the feature-gated crate.
#[cfg(feature = "parallel")]
pub use rayon;

/// Map `f` over `items`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    items.par_iter().map(f).collect()
}

/// Map `f` over `items`, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_slice<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    F: Fn(&T) -> U,
{
    items.iter().map(f).collect()
}

/// Map `f` over the index range `0..n`, preserving order.
#[cfg(feature = "parallel")]
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
{
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over the index range `0..n`, preserving order.
#[cfg(not(feature = "parallel"))]
pub fn map_range<U, F>(n: usize, f: F) -> Vec<U>
where
    F: Fn(usize) -> U,
{
    (0..n).map(f).collect()
}

/// Always-sequential variants, kept for benchmark baselines.
pub fn map_slice_seq<T, U, F: Fn(&T) -> U>(items: &[T], f: F) -> Vec<U> {
    items.iter().map(f).collect()
}

pub fn map_range_seq<U, F: Fn(usize) -> U>(n: usize, f: F) -> Vec<U> {
    (0..n).map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_map_preserves_order() {
        let xs: Vec<u64> = (0..1000).collect();
        let doubled = map_slice(&xs, |x| x * 2);
        assert_eq!(doubled, map_slice_seq(&xs, |x| x * 2));
        let sq = map_range(1000, |i| (i * i) as u64);
        assert_eq!(sq, map_range_seq(1000, |i| (i * i) as u64));
    }
}
