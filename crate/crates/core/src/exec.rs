//! Order-preserving data-parallel helpers.
//!
//! With the `parallel` feature these run on the rayon global pool, otherwise
//! they are plain iterator loops. Every helper returns results in input
//! order and never reduces floating-point values across threads, so both
//! builds produce bit-identical output. Reductions happen sequentially on
//! the collected vector at the call site.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// `(0..n).map(f).collect()`, possibly in parallel.
pub fn map_range<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
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

/// `items.iter().map(f).collect()`, possibly in parallel.
pub fn map_slice<S, T, F>(items: &[S], f: F) -> Vec<T>
where
    S: Sync,
    T: Send,
    F: Fn(&S) -> T + Sync + Send,
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

/// Fills `out[i] = f(i)` for every index, possibly in parallel.
pub fn fill_indexed<T, F>(out: &mut [T], f: F)
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_iter_mut().enumerate().for_each(|(i, slot)| *slot = f(i));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.iter_mut().enumerate().for_each(|(i, slot)| *slot = f(i));
    }
}

/// Fills consecutive `chunk`-sized rows of `out`, `f(row_index, row)`.
pub fn fill_rows<T, F>(out: &mut [T], chunk: usize, f: F)
where
    T: Send,
    F: Fn(usize, &mut [T]) + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        out.par_chunks_mut(chunk).enumerate().for_each(|(i, row)| f(i, row));
    }
    #[cfg(not(feature = "parallel"))]
    {
        out.chunks_mut(chunk).enumerate().for_each(|(i, row)| f(i, row));
    }
}

/// Like [`map_range`] but on a dedicated pool of `threads` workers, so
/// coarse tasks (whole training runs) do not share the global pool.
pub fn map_range_with_threads<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
            Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
            Err(_) => (0..n).map(f).collect(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        (0..n).map(f).collect()
    }
}

/// Whether this build was compiled with the rayon backend.
pub const fn is_parallel() -> bool {
    cfg!(feature = "parallel")
}
