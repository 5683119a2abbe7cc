//! Task-level parallelism with a sequential fallback.
//!
//! Every helper returns results in input order, so output is identical
//! whether the tasks ran on one thread or many. With the `parallel` feature
//! disabled everything runs on the calling thread.

use crate::error::Result;

/// Maps `f` over `items`, preserving order.
pub fn map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        if rayon::current_num_threads() > 1 {
            return items.par_iter().map(f).collect();
        }
    }
    items.iter().map(f).collect()
}

/// Fallible [`map`]; the error of the lowest failing index wins.
pub fn try_map<T, R, F>(items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R> + Sync + Send,
{
    map(items, f).into_iter().collect()
}

/// Runs `f` with at most `jobs` worker threads (`None` = all cores,
/// `Some(1)` = strictly sequential).
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> R {
    #[cfg(feature = "parallel")]
    {
        if let Some(n) = jobs {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .expect("thread pool");
            return pool.install(f);
        }
    }
    let _ = jobs;
    f()
}

/// Number of worker threads tasks will currently be spread over.
pub fn current_jobs() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved_at_any_job_count() {
        let items: Vec<u64> = (0..200).collect();
        let square = |x: &u64| x * x;
        let one = with_jobs(Some(1), || map(&items, square));
        let four = with_jobs(Some(4), || map(&items, square));
        assert_eq!(one, four);
        assert_eq!(one[17], 289);
    }

    #[test]
    fn first_error_wins() {
        let items: Vec<i32> = (0..10).collect();
        let r = try_map(&items, |&x| {
            if x >= 3 {
                Err(crate::Error::Config(format!("bad {x}")))
            } else {
                Ok(x)
            }
        });
        assert_eq!(r.unwrap_err().to_string(), "invalid configuration: bad 3");
    }
}
