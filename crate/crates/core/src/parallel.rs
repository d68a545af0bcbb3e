//! Deterministic data-parallel sweeps.
//!
//! Work is split into fixed-size chunks independent of the thread count and
//! partial results are merged in chunk order, so floating point reductions
//! give identical bits for any worker count.

use rayon::prelude::*;
use std::ops::Range;

/// Items per chunk for sweeps over dataset indices.
pub const CHUNK: usize = 2048;

/// Maps each chunk of `0..n` to a partial result and folds the partials in
/// order with `merge`.
pub fn map_reduce<R, M, F>(n: usize, chunk: usize, map: M, init: R, merge: F) -> R
where
    R: Send,
    M: Fn(Range<usize>) -> R + Sync + Send,
    F: Fn(R, R) -> R,
{
    let chunk = chunk.max(1);
    let ranges: Vec<Range<usize>> = (0..n.div_ceil(chunk))
        .map(|c| c * chunk..((c + 1) * chunk).min(n))
        .collect();
    let parts: Vec<R> = ranges.into_par_iter().map(map).collect();
    parts.into_iter().fold(init, merge)
}

/// Ordered parallel map over `0..n`.
pub fn map_indexed<R, M>(n: usize, map: M) -> Vec<R>
where
    R: Send,
    M: Fn(usize) -> R + Sync + Send,
{
    (0..n).into_par_iter().map(map).collect()
}
