//! Shannon entropy in bits and cosine similarity.

use thiserror::Error;

use crate::scalar::{order_free_sum, Scalar};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("vectors have different lengths ({0} and {1})")]
    LengthMismatch(usize, usize),
    #[error("cosine similarity of a zero vector is undefined")]
    ZeroVector,
}

/// `-Σ p log2 p` with `0 · log2 0 = 0`.
///
/// Terms are accumulated in sorted order, which makes the result exactly
/// invariant under permutation of `probs`. The value is clamped to
/// `[0, log2 n]` to absorb rounding at the uniform vector.
pub fn shannon_entropy<T: Scalar>(probs: &[T]) -> T {
    let mut terms: Vec<T> = probs
        .iter()
        .filter(|&&p| p > T::zero())
        .map(|&p| p * -p.log2())
        .collect();
    let h = order_free_sum(&mut terms);
    let ceiling = T::from_count(probs.len().max(1)).log2();
    h.max(T::zero()).min(ceiling)
}

/// `x·y / (‖x‖ ‖y‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity<T: Scalar>(x: &[T], y: &[T]) -> Result<T, SimilarityError> {
    if x.len() != y.len() {
        return Err(SimilarityError::LengthMismatch(x.len(), y.len()));
    }
    let dot: T = x.iter().zip(y).map(|(&a, &b)| a * b).sum();
    let norm_x = x.iter().map(|&a| a * a).sum::<T>().sqrt();
    let norm_y = y.iter().map(|&b| b * b).sum::<T>().sqrt();
    if norm_x == T::zero() || norm_y == T::zero() {
        return Err(SimilarityError::ZeroVector);
    }
    Ok((dot / (norm_x * norm_y)).max(-T::one()).min(T::one()))
}
