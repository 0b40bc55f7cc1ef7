//! Execution policy for the data-parallel inner loops.
//!
//! Every parallel path produces results bit-identical to its sequential
//! counterpart: work is split into fixed index ranges whose partial results
//! are reduced in ascending range order, independent of thread scheduling.

use std::ops::Range;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Default number of sample rows per accumulation block.
pub const DEFAULT_BLOCK_ROWS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Exec {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled, and falls
    /// back to sequential execution otherwise.
    #[default]
    Parallel,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }
}

/// `(0..n).map(f).collect()`, in order.
pub fn map_indexed<T, F>(exec: Exec, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        return (0..n).into_par_iter().map(f).collect();
    }
    let _ = exec;
    (0..n).map(f).collect()
}

/// Splits `0..n` into consecutive ranges of `block` rows.
pub fn blocks(n: usize, block: usize) -> Vec<Range<usize>> {
    let block = block.max(1);
    (0..n.div_ceil(block)).map(|b| b * block..((b + 1) * block).min(n)).collect()
}

/// Sums per-block partial vectors of length `len` over the row range `0..n`.
///
/// Partials are added into the accumulator in ascending block order, so the
/// floating-point result only depends on `block`, never on `exec`.
pub fn sum_blocks<F>(exec: Exec, n: usize, block: usize, len: usize, f: F) -> Vec<f64>
where
    F: Fn(Range<usize>) -> Vec<f64> + Sync + Send,
{
    let ranges = blocks(n, block);
    let mut acc = vec![0.0f64; len];
    let add = |acc: &mut Vec<f64>, part: Vec<f64>| {
        debug_assert_eq!(part.len(), len);
        for (a, p) in acc.iter_mut().zip(part) {
            *a += p;
        }
    };

    #[cfg(feature = "parallel")]
    if exec.is_parallel() {
        // Bound the number of live partials to a few per thread.
        let group = (rayon::current_num_threads() * 2).max(1);
        for chunk in ranges.chunks(group) {
            let parts: Vec<Vec<f64>> = chunk.par_iter().cloned().map(&f).collect();
            for part in parts {
                add(&mut acc, part);
            }
        }
        return acc;
    }
    let _ = exec;
    for r in ranges {
        add(&mut acc, f(r));
    }
    acc
}
