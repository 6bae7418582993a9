//! Data-parallel helpers with a sequential fallback.
//!
//! Every kernel in this crate parallelizes over independent output slots
//! (rows of a matrix, queries of a batch, samples of a draw) and keeps all
//! floating-point reductions inside a single slot, in a fixed sequential
//! order. Results are therefore bit-identical for any thread count, and
//! identical between the `parallel` (rayon) build and the sequential
//! fallback (`--no-default-features`).

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Apply `f` to each chunk of `chunk` elements of `data`, passing the chunk
/// index. Chunks are disjoint, so the closure runs on each independently.
pub fn for_each_chunk_mut<T, F>(data: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync,
{
    assert!(chunk > 0, "chunk size must be positive");
    #[cfg(feature = "parallel")]
    {
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        for (i, c) in data.chunks_mut(chunk).enumerate() {
            f(i, c);
        }
    }
}

/// Map `0..n` through `f`, collecting results in index order.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Whether this build runs kernels on a rayon pool.
pub fn is_parallel_build() -> bool {
    cfg!(feature = "parallel")
}
