//! Runtime switch between the sequential and the rayon code paths.
//!
//! The `parallel` cargo feature decides whether the rayon path is compiled
//! in at all; this enum decides at runtime which path a call uses, so the
//! two can be benchmarked against each other in one binary. Without the
//! feature, every mode degrades to sequential execution.

/// Execution mode for the embarrassingly parallel operations
/// (certificate column sweeps, scenario batches).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Parallelism {
    Sequential,
    /// Use the global rayon pool (configure width via `rayon::ThreadPoolBuilder`
    /// or run inside a scoped pool).
    #[default]
    Rayon,
}

impl Parallelism {
    pub fn from_jobs(jobs: Option<usize>) -> Parallelism {
        match jobs {
            Some(0) | Some(1) => Parallelism::Sequential,
            _ => Parallelism::Rayon,
        }
    }

    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Parallelism::Rayon
    }
}

/// Map `items` through `f`, in input order.
pub fn map_indexed<T, U, F>(par: Parallelism, items: Vec<T>, f: F) -> Vec<U>
where
    T: Send,
    U: Send,
    F: Fn(usize, T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() {
        use rayon::prelude::*;
        return items
            .into_par_iter()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect();
    }
    let _ = par;
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| f(i, item))
        .collect()
}

/// Fold the range `0..len` with a deterministic reduction: `fold` maps each
/// index into the accumulator, `merge` combines chunk results associatively.
pub fn fold_range<A, F, M>(par: Parallelism, len: u64, identity: A, fold: F, merge: M) -> A
where
    A: Send + Clone,
    F: Fn(A, u64) -> A + Sync + Send,
    M: Fn(A, A) -> A + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if par.is_parallel() && len >= 2 {
        use rayon::prelude::*;
        let chunk = (len / (rayon::current_num_threads() as u64 * 8)).max(1024);
        let n_chunks = len.div_ceil(chunk);
        return (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let lo = c * chunk;
                let hi = ((c + 1) * chunk).min(len);
                let mut acc = identity.clone();
                for i in lo..hi {
                    acc = fold(acc, i);
                }
                acc
            })
            .reduce(|| identity.clone(), |a, b| merge(a, b));
    }
    let _ = (&par, &merge);
    let mut acc = identity;
    for i in 0..len {
        acc = fold(acc, i);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn map_preserves_order() {
        let items: Vec<u64> = (0..1000).collect();
        let seq = map_indexed(Parallelism::Sequential, items.clone(), |i, v| v * 2 + i as u64);
        let par = map_indexed(Parallelism::Rayon, items, |i, v| v * 2 + i as u64);
        assert_eq!(seq, par);
    }

    #[test]
    fn fold_matches_sequential() {
        let sum =
            |par| fold_range(par, 100_000, 0u64, |acc, i| acc + i * i % 7, |a, b| a + b);
        assert_eq!(sum(Parallelism::Sequential), sum(Parallelism::Rayon));
    }
}
