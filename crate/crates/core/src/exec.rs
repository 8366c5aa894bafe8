//! Execution strategy for the data-parallel inner loops.
//!
//! Every parallel loop in this crate goes through [`Execution`]. Work is split
//! into independent per-index tasks whose results are collected in index order,
//! and any reduction over those results is done sequentially afterwards. That
//! keeps the output bit-identical between [`Execution::Sequential`] and
//! [`Execution::Parallel`], whatever the thread schedule.
//!
//! Without the `parallel` feature, `Parallel` silently runs sequentially.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
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

impl Execution {
    /// True when work will actually be spread over the rayon pool.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Execution::Parallel
    }

    /// Evaluates `f(i)` for `i in 0..n` and returns the results in index order.
    pub fn map_range<T, F>(self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Maps every element of `items`, preserving order.
    pub fn map_slice<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Runs `f(row_index, row)` over consecutive `row_len`-sized chunks of `data`.
    pub fn for_each_row_mut<T, F>(self, data: &mut [T], row_len: usize, f: F)
    where
        T: Send,
        F: Fn(usize, &mut [T]) + Sync + Send,
    {
        assert!(row_len > 0, "row length must be positive");
        #[cfg(feature = "parallel")]
        if self == Execution::Parallel {
            data.par_chunks_mut(row_len)
                .enumerate()
                .for_each(|(i, row)| f(i, row));
            return;
        }
        data.chunks_mut(row_len)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_modes_agree() {
        let f = |i: usize| (i as f64).sqrt().sin();
        let a = Execution::Sequential.map_range(1000, f);
        let b = Execution::Parallel.map_range(1000, f);
        assert_eq!(a, b);
    }

    #[test]
    fn rows_are_visited_in_place() {
        let mut data = vec![0usize; 12];
        Execution::Parallel.for_each_row_mut(&mut data, 3, |i, row| {
            for (j, v) in row.iter_mut().enumerate() {
                *v = i * 10 + j;
            }
        });
        assert_eq!(data, vec![0, 1, 2, 10, 11, 12, 20, 21, 22, 30, 31, 32]);
    }
}
