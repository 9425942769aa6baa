//! Reproducible floating-point reductions.
//!
//! Every sum in the crate goes through a pairwise tree whose shape depends
//! only on the input length, never on the thread count. Leaves of
//! [`LEAF`] elements are summed left to right; larger ranges split at the
//! midpoint rounded down to a multiple of [`LEAF`].

use rayon::prelude::*;

/// Number of elements summed sequentially at the bottom of the tree.
pub const LEAF: usize = 1024;

/// Pairwise sum of `xs`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= LEAF {
        return xs.iter().fold(0.0, |acc, &x| acc + x);
    }
    let mid = split_point(xs.len());
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Same tree as [`pairwise_sum`], with the two halves evaluated through
/// `rayon::join`. Bit-identical to the sequential version.
pub fn par_pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 16 * LEAF {
        return pairwise_sum(xs);
    }
    let mid = split_point(xs.len());
    let (l, r) = rayon::join(|| par_pairwise_sum(&xs[..mid]), || par_pairwise_sum(&xs[mid..]));
    l + r
}

/// Pairwise sum of `f(i)` for `i in 0..len` without materializing the terms.
pub fn pairwise_sum_by<F>(len: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    sum_range(0, len, f)
}

fn sum_range<F>(lo: usize, hi: usize, f: &F) -> f64
where
    F: Fn(usize) -> f64 + Sync,
{
    let len = hi - lo;
    if len <= LEAF {
        return (lo..hi).fold(0.0, |acc, i| acc + f(i));
    }
    let mid = lo + split_point(len);
    if len > 16 * LEAF {
        let (l, r) = rayon::join(|| sum_range(lo, mid, f), || sum_range(mid, hi, f));
        l + r
    } else {
        sum_range(lo, mid, f) + sum_range(mid, hi, f)
    }
}

/// Neumaier-compensated sequential sum, for totals that must not drift
/// (e.g. masses over all cells of a level).
pub fn compensated_sum(xs: &[f64]) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Dot product through the same fixed tree.
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    pairwise_sum_by(x.len(), &|i| x[i] * y[i])
}

/// Combines per-block partial results in a fixed pairwise order.
///
/// `combine` must be associative up to floating-point rounding; the tree
/// shape is a function of `parts.len()` only.
pub fn tree_combine<T, F>(mut parts: Vec<T>, combine: F) -> Option<T>
where
    F: Fn(T, T) -> T,
{
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            match it.next() {
                Some(b) => next.push(combine(a, b)),
                None => next.push(a),
            }
        }
        parts = next;
    }
    parts.pop()
}

/// Maximum of a slice (NaN-free input assumed); `0.0` for an empty slice.
pub fn max_abs(xs: &[f64]) -> f64 {
    xs.par_iter().map(|x| x.abs()).reduce(|| 0.0, f64::max)
}

fn split_point(len: usize) -> usize {
    let half = len / 2;
    let m = (half / LEAF) * LEAF;
    if m == 0 {
        LEAF
    } else {
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parallel_and_sequential_trees_agree_bitwise() {
        let xs: Vec<f64> = (0..200_003).map(|i| ((i as f64) * 0.618).sin() * 1e-3 + 1.0 / (i as f64 + 1.0)).collect();
        let a = pairwise_sum(&xs);
        let b = par_pairwise_sum(&xs);
        let c = pairwise_sum_by(xs.len(), &|i| xs[i]);
        assert_eq!(a.to_bits(), b.to_bits());
        assert_eq!(a.to_bits(), c.to_bits());
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let d = pool.install(|| par_pairwise_sum(&xs));
        assert_eq!(a.to_bits(), d.to_bits());
    }

    #[test]
    fn tree_combine_is_fixed_shape() {
        let parts: Vec<u64> = (1..=7).collect();
        assert_eq!(tree_combine(parts, |a, b| a + b), Some(28));
        assert_eq!(tree_combine(Vec::<u64>::new(), |a, b| a + b), None);
    }

    #[test]
    fn pairwise_sum_is_accurate() {
        let xs = vec![0.1; 1_000_000];
        assert!((pairwise_sum(&xs) - 100_000.0).abs() < 1e-8);
    }
}
