//! Deterministic data-parallel helpers.
//!
//! Floating-point reductions are order-sensitive, and rayon's adaptive
//! splitting would make the reduction tree depend on work stealing. The
//! helpers here split work at fixed index boundaries instead: chunks may be
//! *mapped* on any thread, but partial results are always *folded in chunk
//! order*. Output is therefore bitwise identical for any thread count, with
//! or without the `parallel` feature.

/// Fixed chunk length used by the batch loss/gradient reductions.
pub const DEFAULT_CHUNK: usize = 128;

/// splitmix64 finalizer. Used to derive independent, well-separated RNG
/// seeds from one user seed plus stream coordinates.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Map fixed-index chunks of `items` (in parallel when enabled), then fold
/// the partial results in chunk order.
pub fn chunk_map_fold<T, R, M, F>(items: &[T], chunk_size: usize, map: M, init: R, fold: F) -> R
where
    T: Sync,
    R: Send,
    M: Fn(&[T]) -> R + Sync,
    F: FnMut(R, R) -> R,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let parts: Vec<R> = items.par_chunks(chunk_size.max(1)).map(&map).collect();
        parts.into_iter().fold(init, fold)
    }
    #[cfg(not(feature = "parallel"))]
    {
        chunk_map_fold_seq(items, chunk_size, map, init, fold)
    }
}

/// Sequential reference path for [`chunk_map_fold`]. Always available so
/// tests and benchmarks can pin the parallel path against it.
pub fn chunk_map_fold_seq<T, R, M, F>(
    items: &[T],
    chunk_size: usize,
    map: M,
    init: R,
    mut fold: F,
) -> R
where
    M: Fn(&[T]) -> R,
    F: FnMut(R, R) -> R,
{
    let mut acc = init;
    for chunk in items.chunks(chunk_size.max(1)) {
        let part = map(chunk);
        acc = fold(acc, part);
    }
    acc
}

/// Compute `f(0..n)` into a vector, in parallel when enabled. Results are
/// collected in index order, so output does not depend on scheduling.
pub fn map_indexed<R, F>(n: usize, f: F) -> Vec<R>
where
    R: Send,
    F: Fn(usize) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn par_matches_seq_bitwise() {
        // Sum of values whose magnitudes differ wildly: any change in
        // summation order shows up in the low bits.
        let items: Vec<f64> = (0..10_000)
            .map(|i| (i as f64 * 0.7391).sin() * 10f64.powi((i % 13) as i32 - 6))
            .collect();
        let map = |c: &[f64]| c.iter().sum::<f64>();
        let a = chunk_map_fold(&items, 97, map, 0.0, |x, y| x + y);
        let b = chunk_map_fold_seq(&items, 97, map, 0.0, |x, y| x + y);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn map_indexed_order() {
        let v = map_indexed(100, |i| i * i);
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }

    #[test]
    fn empty_input() {
        let v: Vec<f64> = vec![];
        let s = chunk_map_fold(&v, 8, |c: &[f64]| c.iter().sum::<f64>(), 0.0, |a, b| a + b);
        assert_eq!(s, 0.0);
    }
}
