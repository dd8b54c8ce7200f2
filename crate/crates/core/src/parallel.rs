//! Thread-pool sizing from the environment.

use crate::error::{Error, Result};

pub const THREADS_ENV: &str = "BAYES_BOUNDS_THREADS";

/// Requested worker count: `None` for automatic (unset or `0`).
pub fn requested_threads() -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(Error::BadParams(format!(
                "{THREADS_ENV} must be a non-negative integer, got `{s}`"
            ))),
        },
    }
}

pub fn build_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        b = b.num_threads(n);
    }
    b.build()
        .map_err(|e| Error::BadParams(format!("thread pool: {e}")))
}

/// Run `f` on a pool sized by `BAYES_BOUNDS_THREADS`.
pub fn with_env_pool<R: Send>(f: impl FnOnce() -> R + Send) -> Result<R> {
    Ok(build_pool(requested_threads()?)?.install(f))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_pool_size() {
        let pool = build_pool(Some(2)).unwrap();
        assert_eq!(pool.current_num_threads(), 2);
        assert!(build_pool(None).unwrap().current_num_threads() >= 1);
    }
}
