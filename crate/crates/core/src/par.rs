// SPDX-License-Identifier: Apache-2.0

//! Execution strategy for the data-parallel inner loops.
//!
//! Every batch operation in this crate (MinHash signatures, corpus mutation
//! fan-out, per-case scoring, batch objectives) funnels through [`Exec`].
//! With the `parallel` feature enabled, [`Exec::Parallel`] dispatches to rayon;
//! without it, both variants run the same sequential code path. Results are
//! always returned in input order, so the choice of strategy never changes
//! output bytes.

/// How a batch operation distributes its work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    /// Single-threaded, in input order.
    Sequential,
    /// Rayon work-stealing when the `parallel` feature is compiled in,
    /// otherwise identical to `Sequential`.
    #[default]
    Parallel,
}

impl Exec {
    /// True when this strategy will actually use worker threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// Ordered map over a slice.
pub fn map<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = exec;
    items.iter().map(f).collect()
}

/// Ordered map over a slice, with the element index.
pub fn map_indexed<T, R, F>(exec: Exec, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let _ = exec;
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

const LEAF: usize = 32;

/// Pairwise (tree) summation.
///
/// The tree shape depends only on `values.len()`: the slice is halved at
/// `len / 2` until a leaf of at most 32 elements, which is summed left to
/// right. Parallel and sequential execution therefore produce bit-identical
/// results.
pub fn pairwise_sum(exec: Exec, values: &[f64]) -> f64 {
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let (left, right) = values.split_at(values.len() / 2);
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        let (a, b) = rayon::join(|| pairwise_sum(exec, left), || pairwise_sum(exec, right));
        return a + b;
    }
    pairwise_sum(exec, left) + pairwise_sum(exec, right)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let xs: Vec<u64> = (0..10_000).collect();
        let seq = map(Exec::Sequential, &xs, |x| x * 3);
        let par = map(Exec::Parallel, &xs, |x| x * 3);
        assert_eq!(seq, par);
        assert_eq!(seq[9_999], 29_997);
    }

    #[test]
    fn pairwise_sum_is_strategy_independent() {
        let xs: Vec<f64> = (0..5_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let a = pairwise_sum(Exec::Sequential, &xs);
        let b = pairwise_sum(Exec::Parallel, &xs);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn pairwise_sum_small_and_empty() {
        assert_eq!(pairwise_sum(Exec::Sequential, &[]), 0.0);
        assert_eq!(pairwise_sum(Exec::Parallel, &[1.5, 2.5]), 4.0);
    }
}
