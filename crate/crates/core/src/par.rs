//! Data-parallel helpers.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run the same closures sequentially. Every kernel in the crate goes
//! through here, so switching the feature off gives a fully sequential build
//! with bit-identical results.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Maps `f` over `0..len` and collects in index order.
pub fn map_collect<T, F>(len: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..len).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..len).map(f).collect()
    }
}

/// Calls `f(row_index, row)` for each `width`-sized chunk of `data`.
pub fn for_each_row_mut<T, F>(data: &mut [T], width: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    if width == 0 {
        return;
    }
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(width)
            .enumerate()
            .for_each(|(i, row)| f(i, row));
    }
}

/// Indices folded into one accumulator before merging.
const FOLD_CHUNK: usize = 256;

/// Folds `0..len` in fixed chunks and merges them with `reduce` in index
/// order, so floating-point results do not depend on the thread count.
///
/// `reduce` must be associative; `identity` must be its neutral element.
pub fn fold_reduce<A, I, F, R>(len: usize, identity: I, fold: F, reduce: R) -> A
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(A, usize) -> A + Sync + Send,
    R: Fn(A, A) -> A + Sync + Send,
{
    let chunks = len.div_ceil(FOLD_CHUNK);
    let parts = map_collect(chunks, |c| {
        let end = ((c + 1) * FOLD_CHUNK).min(len);
        (c * FOLD_CHUNK..end).fold(identity(), &fold)
    });
    parts.into_iter().fold(identity(), reduce)
}

/// Number of worker threads the kernels will use.
pub fn current_num_threads() -> usize {
    #[cfg(feature = "parallel")]
    {
        rayon::current_num_threads()
    }
    #[cfg(not(feature = "parallel"))]
    {
        1
    }
}
