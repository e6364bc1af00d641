//! Execution helpers for the element-parallel kernels.
//!
//! All hot loops in this crate are maps over elements or faces whose results
//! are combined in a fixed order afterwards, so outputs are bitwise identical
//! no matter how many threads run the map. With the `parallel` feature the
//! maps run on the global rayon pool; without it they compile to plain
//! sequential iteration and rayon is not linked at all.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Map `f` over `0..n`, collecting results in index order.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
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

/// Sequential variant of [`map_indexed`], available regardless of features.
///
/// The benchmark suite uses this to compare both paths in one build.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Sum `f(i)` over `0..n` with a fixed (index-ordered) reduction.
pub fn sum_indexed<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    // Chunked so the sequential combine touches O(n / chunk) partial sums but
    // each partial is itself summed in index order.
    #[cfg(feature = "parallel")]
    {
        const CHUNK: usize = 1024;
        let chunks = n.div_ceil(CHUNK);
        let partials: Vec<f64> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let lo = c * CHUNK;
                let hi = usize::min(lo + CHUNK, n);
                let mut acc = 0.0;
                for i in lo..hi {
                    acc += f(i);
                }
                acc
            })
            .collect();
        partials.iter().sum()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).sum()
    }
}

/// Sequential variant of [`sum_indexed`] matching its reduction order.
pub fn sum_indexed_seq<F>(n: usize, f: F) -> f64
where
    F: Fn(usize) -> f64,
{
    const CHUNK: usize = 1024;
    let chunks = n.div_ceil(CHUNK);
    let mut total = 0.0;
    for c in 0..chunks {
        let lo = c * CHUNK;
        let hi = usize::min(lo + CHUNK, n);
        let mut acc = 0.0;
        for i in lo..hi {
            acc += f(i);
        }
        total += acc;
    }
    total
}

/// Route the linear algebra backend through the same thread pool.
pub fn configure_backend_parallelism() {
    #[cfg(feature = "parallel")]
    faer::set_global_parallelism(faer::Par::rayon(0));
    #[cfg(not(feature = "parallel"))]
    faer::set_global_parallelism(faer::Par::Seq);
}
