//! Seed sweeps. With the `parallel` feature the seeds are processed on the
//! rayon pool; results always come back in input order.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Applies `f` to every seed, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub fn map_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    T: Send,
    F: Fn(u64) -> T + Sync + Send,
{
    seeds.par_iter().map(|&s| f(s)).collect()
}

/// Applies `f` to every seed, in parallel when the `parallel` feature is on.
#[cfg(not(feature = "parallel"))]
pub fn map_seeds<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    map_seeds_seq(seeds, f)
}

/// Sequential reference implementation of [`map_seeds`].
pub fn map_seeds_seq<T, F>(seeds: &[u64], f: F) -> Vec<T>
where
    F: Fn(u64) -> T,
{
    seeds.iter().map(|&s| f(s)).collect()
}

/// Runs `f` on a dedicated pool of `threads` workers. Without the `parallel`
/// feature the thread count is ignored.
#[cfg(feature = "parallel")]
pub fn with_threads<T, F>(threads: usize, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    if threads == 0 {
        return Err(Error::Invariant("thread count must be positive".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Invariant(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Runs `f` on a dedicated pool of `threads` workers. Without the `parallel`
/// feature the thread count is ignored.
#[cfg(not(feature = "parallel"))]
pub fn with_threads<T, F>(threads: usize, f: F) -> Result<T>
where
    F: FnOnce() -> T,
{
    if threads == 0 {
        return Err(Error::Invariant("thread count must be positive".into()));
    }
    Ok(f())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_agree() {
        let seeds: Vec<u64> = (0..64).collect();
        let f = |s: u64| s.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(7);
        assert_eq!(map_seeds(&seeds, f), map_seeds_seq(&seeds, f));
    }

    #[test]
    fn pool_size_is_validated() {
        assert!(with_threads(0, || ()).is_err());
        assert_eq!(
            with_threads(2, || map_seeds(&[1, 2, 3], |s| s * 2)).unwrap(),
            vec![2, 4, 6]
        );
    }
}
