//! Chunked data-parallel execution with a deterministic reduction order.
//!
//! Work is split into fixed-size chunks whose results are collected in chunk
//! order, so a reduction over the returned vector gives bit-identical results
//! whether the chunks ran on the rayon pool or sequentially. With the
//! `parallel` feature disabled every call runs sequentially.

use std::ops::Range;
use std::sync::atomic::{AtomicU8, Ordering};

/// Default chunk length for per-pair and per-item loops.
pub const CHUNK: usize = 512;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    Parallel,
}

static MODE: AtomicU8 = AtomicU8::new(if cfg!(feature = "parallel") { 1 } else { 0 });

/// Selects how chunked loops execute. Results do not depend on the mode.
pub fn set_parallelism(mode: Parallelism) {
    MODE.store(matches!(mode, Parallelism::Parallel) as u8, Ordering::Relaxed);
}

pub fn parallelism() -> Parallelism {
    if cfg!(feature = "parallel") && MODE.load(Ordering::Relaxed) == 1 {
        Parallelism::Parallel
    } else {
        Parallelism::Sequential
    }
}

fn chunk_ranges(len: usize, chunk: usize) -> Vec<Range<usize>> {
    let chunk = chunk.max(1);
    (0..len.div_ceil(chunk)).map(|c| c * chunk..((c + 1) * chunk).min(len)).collect()
}

/// Applies `f` to consecutive ranges covering `0..len` and returns the
/// results in range order.
pub fn map_chunks<T, F>(len: usize, chunk: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(Range<usize>) -> T + Send + Sync,
{
    let ranges = chunk_ranges(len, chunk);
    #[cfg(feature = "parallel")]
    {
        if parallelism() == Parallelism::Parallel && ranges.len() > 1 {
            use rayon::prelude::*;
            return ranges.into_par_iter().map(f).collect();
        }
    }
    ranges.into_iter().map(f).collect()
}

/// Maps independent jobs (sweep points, seeds) in order.
pub fn map_jobs<I, T, F>(jobs: Vec<I>, f: F) -> Vec<T>
where
    I: Send,
    T: Send,
    F: Fn(I) -> T + Send + Sync,
{
    #[cfg(feature = "parallel")]
    {
        if parallelism() == Parallelism::Parallel && jobs.len() > 1 {
            use rayon::prelude::*;
            return jobs.into_par_iter().map(f).collect();
        }
    }
    jobs.into_iter().map(f).collect()
}

/// Element-wise sum of equally sized partial vectors, in order.
pub fn sum_partials(partials: Vec<Vec<f64>>, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for part in partials {
        for (o, p) in out.iter_mut().zip(part) {
            *o += p;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_cover_everything_once() {
        let r = chunk_ranges(1030, 512);
        assert_eq!(r, vec![0..512, 512..1024, 1024..1030]);
        assert!(chunk_ranges(0, 8).is_empty());
    }

    #[test]
    fn chunk_results_keep_order() {
        let out = map_chunks(10, 3, |r| r.start);
        assert_eq!(out, vec![0, 3, 6, 9]);
    }

    #[test]
    fn reduction_is_mode_independent() {
        let data: Vec<f64> = (0..10_000).map(|i| ((i as f64) * 0.37).sin() * 1e-3).collect();
        let run = || map_chunks(data.len(), 97, |r| data[r].iter().sum::<f64>()).into_iter().sum::<f64>();
        set_parallelism(Parallelism::Sequential);
        let a = run();
        set_parallelism(Parallelism::Parallel);
        let b = run();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
