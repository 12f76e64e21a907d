//! Data-parallel plumbing. Work is split over disjoint output planes only,
//! and each plane keeps its documented accumulation order, so results are
//! bit-identical whether this runs on one thread or many.

/// Execution mode for operators that expose a runtime switch (the fast
/// depthwise path and the benchmark harness).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// Uses the rayon pool when the `parallel` feature is enabled; falls back
    /// to sequential execution otherwise.
    Parallel,
}

#[cfg(feature = "parallel")]
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    use rayon::prelude::*;
    data.par_chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, chunk)| f(i, chunk));
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn for_each_chunk_mut<T, F>(data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    data.chunks_mut(chunk_len)
        .enumerate()
        .for_each(|(i, chunk)| f(i, chunk));
}

pub(crate) fn for_each_chunk_mut_mode<T, F>(mode: ExecMode, data: &mut [T], chunk_len: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Send + Sync,
{
    match mode {
        ExecMode::Sequential => data
            .chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, chunk)| f(i, chunk)),
        ExecMode::Parallel => for_each_chunk_mut(data, chunk_len, f),
    }
}
