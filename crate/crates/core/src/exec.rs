//! Execution policy for the data-parallel kernels.
//!
//! With the `parallel` feature the batch loops run on rayon's pool; without it,
//! or with [`ExecPolicy::Sequential`], they run on the calling thread. Both
//! paths split work into the same fixed chunks and reduce partial results in
//! chunk order, so the numbers they produce are bit-identical.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecPolicy {
    Sequential,
    #[default]
    Parallel,
}

impl ExecPolicy {
    /// Whether this policy actually fans out in the current build.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == ExecPolicy::Parallel
    }
}

/// How chunk partial sums are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reduction {
    /// Partial results are summed in chunk order: bit-identical across runs
    /// and thread counts.
    #[default]
    Deterministic,
    /// Partial results are combined as they arrive (tree reduce). Faster with
    /// many threads, reproducible only up to rounding.
    Fast,
}

/// Map `f` over `items`, collecting results in input order.
pub fn map_collect<T, R, F>(policy: ExecPolicy, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = policy;
    items.iter().map(f).collect()
}

/// Apply `f` to each element mutably.
pub fn for_each_mut<T, F>(policy: ExecPolicy, items: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize, &mut T) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        use rayon::prelude::*;
        items.par_iter_mut().enumerate().for_each(|(i, x)| f(i, x));
        return;
    }
    let _ = policy;
    items.iter_mut().enumerate().for_each(|(i, x)| f(i, x));
}

/// Map each chunk to a partial value and reduce with `combine`.
///
/// `Deterministic` collects partials then folds them left to right; `Fast`
/// (parallel builds only) uses rayon's tree reduction.
pub fn map_reduce<R, M, C>(
    policy: ExecPolicy,
    reduction: Reduction,
    n_chunks: usize,
    map: M,
    identity: impl Fn() -> R + Sync + Send,
    combine: C,
) -> R
where
    R: Send,
    M: Fn(usize) -> R + Sync + Send,
    C: Fn(R, R) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if policy.is_parallel() {
        use rayon::prelude::*;
        return match reduction {
            Reduction::Deterministic => {
                let parts: Vec<R> = (0..n_chunks).into_par_iter().map(&map).collect();
                parts.into_iter().fold(identity(), &combine)
            }
            Reduction::Fast => (0..n_chunks)
                .into_par_iter()
                .map(&map)
                .reduce(&identity, &combine),
        };
    }
    let _ = (policy, reduction);
    (0..n_chunks).map(map).fold(identity(), combine)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policies_agree_on_ordered_sum() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin() * 1e-3 + 1.0).collect();
        let chunk = 37;
        let n_chunks = xs.len().div_ceil(chunk);
        let run = |p| {
            map_reduce(
                p,
                Reduction::Deterministic,
                n_chunks,
                |c| xs[c * chunk..((c + 1) * chunk).min(xs.len())].iter().sum::<f64>(),
                || 0.0,
                |a, b| a + b,
            )
        };
        assert_eq!(run(ExecPolicy::Sequential).to_bits(), run(ExecPolicy::Parallel).to_bits());
    }

    #[test]
    fn map_collect_keeps_order() {
        let xs: Vec<usize> = (0..100).collect();
        let ys = map_collect(ExecPolicy::Parallel, &xs, |x| x * 2);
        assert_eq!(ys, xs.iter().map(|x| x * 2).collect::<Vec<_>>());
    }
}
