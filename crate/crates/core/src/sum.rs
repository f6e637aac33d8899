//! Fixed-order pairwise summation.
//!
//! Every reduction over input samples or atoms goes through these helpers so
//! that the association order depends only on the length of the input.

const BLOCK: usize = 16;

/// Pairwise (tree) sum of a slice.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= BLOCK {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Pairwise sum of `f(0), ..., f(n - 1)` without materializing the terms.
pub fn pairwise_sum_by<F: Fn(usize) -> f64>(n: usize, f: F) -> f64 {
    fn rec<F: Fn(usize) -> f64>(lo: usize, hi: usize, f: &F) -> f64 {
        if hi - lo <= BLOCK {
            return (lo..hi).fold(0.0, |acc, i| acc + f(i));
        }
        let mid = lo + (hi - lo) / 2;
        rec(lo, mid, f) + rec(mid, hi, f)
    }
    rec(0, n, &f)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_sum_on_small_inputs() {
        let v: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 45.0);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn closure_and_slice_agree_bitwise() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        assert_eq!(
            pairwise_sum(&v).to_bits(),
            pairwise_sum_by(v.len(), |i| v[i]).to_bits()
        );
    }

    #[test]
    fn pairwise_is_more_accurate_than_naive() {
        let v = vec![0.1f64; 1 << 20];
        let exact = 0.1 * (1u64 << 20) as f64;
        let naive: f64 = v.iter().sum();
        assert!((pairwise_sum(&v) - exact).abs() <= (naive - exact).abs());
    }
}
