//! Deterministic pairwise (cascade) summation.
//!
//! Every reduction over grid cells goes through here so that results do not depend on
//! evaluation order and rounding error grows like O(log n) rather than O(n).

const BLOCK: usize = 16;

pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        let mut s = 0.0;
        for v in values {
            s += *v;
        }
        return s;
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(i)` for `i in 0..len`.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(len: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= BLOCK {
            let mut s = 0.0;
            for i in lo..hi {
                s += f(i);
            }
            return s;
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, len, &f)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    pairwise_sum_by(a.len(), |i| a[i] * b[i])
}
