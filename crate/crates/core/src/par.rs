//! Data-parallel helpers with a sequential fallback.
//!
//! With the `parallel` feature (default) these dispatch to rayon; without it
//! they run on the calling thread. Every helper returns results in input
//! order, and reductions are performed over fixed-size chunks that are
//! merged sequentially, so floating-point results are bit-identical
//! regardless of the thread count.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Chunk length for order-stable reductions.
pub const REDUCE_CHUNK: usize = 64;

/// Order-preserving map over a slice.
pub fn map<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}

/// Order-preserving map over an index range.
pub fn map_range<U, F>(len: usize, f: F) -> Vec<U>
where
    U: Send,
    F: Fn(usize) -> U + Sync + Send,
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

/// Maps each fixed-size chunk of `items` to a partial result, then folds the
/// partials left to right with `merge`.
pub fn chunked_reduce<T, A, F, M>(items: &[T], init: A, partial: F, mut merge: M) -> A
where
    T: Sync,
    A: Send,
    F: Fn(&[T]) -> A + Sync + Send,
    M: FnMut(A, A) -> A,
{
    #[cfg(feature = "parallel")]
    let partials: Vec<A> = items.par_chunks(REDUCE_CHUNK).map(partial).collect();
    #[cfg(not(feature = "parallel"))]
    let partials: Vec<A> = items.chunks(REDUCE_CHUNK).map(partial).collect();
    partials.into_iter().fold(init, &mut merge)
}

pub fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
