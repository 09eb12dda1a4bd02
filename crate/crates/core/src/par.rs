//! Execution mode for the data-parallel loops in this crate.
//!
//! Every parallel path splits work into fixed-size chunks and reduces the
//! chunk results in index order, so a computation gives the same bits under
//! [`Exec::Sequential`] and [`Exec::Parallel`] regardless of thread count.

use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Exec {
    Sequential,
    /// Rayon-backed when the `parallel` feature is on, sequential otherwise.
    Parallel,
}

impl Default for Exec {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

impl Exec {
    /// True when this mode will actually fan out across threads.
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Order-preserving map over a slice.
    pub fn map<T, U, F>(self, items: &[T], f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(&T) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items.par_iter().map(f).collect();
        }
        items.iter().map(f).collect()
    }

    /// Order-preserving map over `0..n`.
    pub fn map_indices<U, F>(self, n: usize, f: F) -> Vec<U>
    where
        U: Send,
        F: Fn(usize) -> U + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }

    /// Applies `f` to consecutive chunks of `chunk_len` items and returns the
    /// per-chunk results in chunk order.
    pub fn map_chunks<T, U, F>(self, items: &[T], chunk_len: usize, f: F) -> Vec<U>
    where
        T: Sync,
        U: Send,
        F: Fn(usize, &[T]) -> U + Sync + Send,
    {
        let chunk_len = chunk_len.max(1);
        #[cfg(feature = "parallel")]
        if self.is_parallel() {
            return items
                .par_chunks(chunk_len)
                .enumerate()
                .map(|(k, c)| f(k * chunk_len, c))
                .collect();
        }
        items
            .chunks(chunk_len)
            .enumerate()
            .map(|(k, c)| f(k * chunk_len, c))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_agree() {
        let xs: Vec<f64> = (0..10_000).map(|i| (i as f64).sin()).collect();
        let sum = |exec: Exec| -> f64 {
            exec.map_chunks(&xs, 97, |_, c| c.iter().sum::<f64>())
                .into_iter()
                .sum()
        };
        assert_eq!(sum(Exec::Sequential).to_bits(), sum(Exec::Parallel).to_bits());
        assert_eq!(
            Exec::Sequential.map(&xs, |x| x * 2.0),
            Exec::Parallel.map(&xs, |x| x * 2.0)
        );
        assert_eq!(
            Exec::Parallel.map_indices(5, |i| i * i),
            vec![0, 1, 4, 9, 16]
        );
    }

    #[test]
    fn chunk_offsets() {
        let xs: Vec<u32> = (0..10).collect();
        let starts = Exec::Parallel.map_chunks(&xs, 4, |start, c| (start, c.len()));
        assert_eq!(starts, vec![(0, 4), (4, 4), (8, 2)]);
    }
}
