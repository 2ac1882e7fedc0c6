//! Deterministic work splitting.
//!
//! Loops over large index ranges are cut into fixed-size chunks. Chunk
//! boundaries depend only on the problem size, each chunk is computed
//! independently (with its own derived generator stream where randomness is
//! involved), and partial results are always combined in chunk order. The
//! `parallel` feature moves the chunk map onto the rayon pool; it cannot
//! change any numeric result.

use std::ops::Range;

/// Items per work chunk.
pub const CHUNK: usize = 4096;

pub fn chunk_count(n: usize) -> usize {
    n.div_ceil(CHUNK)
}

pub fn chunk_range(c: usize, n: usize) -> Range<usize> {
    let start = c * CHUNK;
    start..((start + CHUNK).min(n))
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(feature = "parallel")]
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Map `f` over `0..n`, collecting results in index order.
#[cfg(not(feature = "parallel"))]
pub fn map_collect<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n).map(f).collect()
}

/// Fold the chunks of `0..n`: `make` builds one partial per chunk, `merge`
/// combines partials in chunk order. `None` when `n == 0`.
pub fn reduce_chunks<A, FC, FM>(n: usize, make: FC, mut merge: FM) -> Option<A>
where
    A: Send,
    FC: Fn(Range<usize>) -> A + Sync + Send,
    FM: FnMut(A, A) -> A,
{
    let parts = map_collect(chunk_count(n), |c| make(chunk_range(c, n)));
    parts.into_iter().reduce(|a, b| merge(a, b))
}
