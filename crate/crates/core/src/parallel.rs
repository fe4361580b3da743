//! Data-parallel fan-out over independent work items.
//!
//! With the `parallel` feature, [`Execution::Parallel`] maps on the rayon
//! pool; without it the same call runs sequentially. Results always come
//! back in input order and each item is computed by the same sequential
//! code, so both modes produce bit-identical output.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Execution {
    Sequential,
    Parallel,
}

impl Default for Execution {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

/// Whether this build can actually run [`Execution::Parallel`] on threads.
pub const fn parallel_available() -> bool {
    cfg!(feature = "parallel")
}

pub fn map<T, R, F>(items: &[T], exec: Execution, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            items.par_iter().map(f).collect()
        }
        _ => items.iter().map(f).collect(),
    }
}

/// Fallible [`map`]; the first error in input order wins.
pub fn try_map<T, R, E, F>(items: &[T], exec: Execution, f: F) -> Result<Vec<R>, E>
where
    T: Sync,
    R: Send,
    E: Send,
    F: Fn(&T) -> Result<R, E> + Sync + Send,
{
    map(items, exec, f).into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let items: Vec<u64> = (0..1000).collect();
        let f = |&x: &u64| (x as f64).sqrt().sin();
        let a = map(&items, Execution::Sequential, f);
        let b = map(&items, Execution::Parallel, f);
        assert_eq!(a, b);
    }

    #[test]
    fn first_error_in_order() {
        let items = [1, 2, 3, 4];
        let r: Result<Vec<i32>, i32> =
            try_map(&items, Execution::Parallel, |&x| if x >= 2 { Err(x) } else { Ok(x) });
        assert_eq!(r, Err(2));
    }
}
