//! Data-parallel map with a sequential fallback.
//!
//! With the `parallel` feature (default) work is spread over a rayon pool;
//! without it everything runs on the calling thread in input order. Results
//! are always returned in input order, so output does not depend on the
//! number of workers.

use crate::error::{Error, Result};

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "MCHOM_THREADS";

/// Worker count: an explicit request wins, then `MCHOM_THREADS`, then `None`
/// (all available cores).
pub fn resolve_threads(explicit: Option<usize>) -> Result<Option<usize>> {
    if let Some(n) = explicit {
        return positive(n);
    }
    match std::env::var(THREADS_ENV) {
        Ok(s) if !s.trim().is_empty() => {
            let n: usize = s
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{THREADS_ENV}='{s}' is not a worker count")))?;
            positive(n)
        }
        _ => Ok(None),
    }
}

fn positive(n: usize) -> Result<Option<usize>> {
    if n == 0 {
        Err(Error::Config("worker count must be at least 1".into()))
    } else {
        Ok(Some(n))
    }
}

/// Run `f` inside a pool of `threads` workers (or the global pool).
#[cfg(feature = "parallel")]
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_threads<R: Send>(_threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(f())
}

/// `items.map(f)`, in parallel when enabled; the first error wins.
pub fn try_map<T, R, F>(items: Vec<T>, f: F) -> Result<Vec<R>>
where
    T: Send,
    R: Send,
    F: Fn(T) -> Result<R> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.into_iter().map(f).collect()
    }
}

/// Whether this build spreads work over threads.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let out = with_threads(Some(3), || try_map((0..100).collect(), |k: usize| Ok(k * k))).unwrap().unwrap();
        assert_eq!(out, (0..100).map(|k| k * k).collect::<Vec<_>>());
    }

    #[test]
    fn errors_propagate() {
        let r = try_map((0..10).collect(), |k: usize| {
            if k == 7 {
                Err(Error::Config("seven".into()))
            } else {
                Ok(k)
            }
        });
        assert!(r.is_err());
    }

    #[test]
    fn explicit_count_wins() {
        assert_eq!(resolve_threads(Some(2)).unwrap(), Some(2));
        assert!(resolve_threads(Some(0)).is_err());
    }
}
