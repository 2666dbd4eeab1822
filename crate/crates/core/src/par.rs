//! Order-preserving map over independent items, optionally on a bounded
//! thread pool.

/// Applies `f` to every item and returns the results in input order. With
/// `workers > 1` and the `parallel` feature, items run on a pool of that many
/// threads; otherwise sequentially. Results never depend on `workers`.
pub(crate) fn map<T, R, F>(workers: usize, items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if workers > 1 && items.len() > 1 {
        use rayon::prelude::*;
        if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
            return pool.install(|| items.par_iter().enumerate().map(|(i, x)| f(i, x)).collect());
        }
    }
    let _ = workers;
    items.iter().enumerate().map(|(i, x)| f(i, x)).collect()
}
