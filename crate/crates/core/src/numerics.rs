//! Stable reductions: log-sum-exp, softmax and pairwise summation.

use crate::scalar::Scalar;

/// `log Σ exp(zᵢ)` with a max shift. Returns `-inf` for an empty slice.
pub fn logsumexp<T: Scalar>(z: &[T]) -> T {
    let max = z.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = pairwise_sum_by(z, |v| (v - max).exp());
    max + s.ln()
}

pub fn softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let lse = logsumexp(z);
    z.iter().map(|&v| (v - lse).exp()).collect()
}

/// `z - logsumexp(z)`.
pub fn log_softmax<T: Scalar>(z: &[T]) -> Vec<T> {
    let lse = logsumexp(z);
    z.iter().map(|&v| v - lse).collect()
}

const PAIRWISE_BLOCK: usize = 8;

/// Pairwise (cascade) summation of `f(xᵢ)`.
pub fn pairwise_sum_by<T: Scalar, U: Copy>(xs: &[U], f: impl Fn(U) -> T + Copy) -> T {
    if xs.len() <= PAIRWISE_BLOCK {
        return xs.iter().fold(T::zero(), |acc, &x| acc + f(x));
    }
    let mid = xs.len() / 2;
    pairwise_sum_by(&xs[..mid], f) + pairwise_sum_by(&xs[mid..], f)
}

pub fn pairwise_sum<T: Scalar>(xs: &[T]) -> T {
    pairwise_sum_by(xs, |x| x)
}

/// Weighted mean `Σ wᵢ vᵢ` of equal-length vectors, accumulated pairwise per coordinate.
/// Weights are assumed to already sum to one.
pub fn weighted_vector_mean<T: Scalar>(vectors: &[Vec<T>], weights: &[T]) -> Vec<T> {
    debug_assert_eq!(vectors.len(), weights.len());
    let dim = vectors.first().map_or(0, Vec::len);
    let idx: Vec<usize> = (0..vectors.len()).collect();
    (0..dim)
        .map(|j| pairwise_sum_by(&idx, |i| weights[i] * vectors[i][j]))
        .collect()
}

/// `‖a − b‖∞`.
pub fn max_abs_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |m, (&x, &y)| m.max((x - y).abs()))
}
