//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the decision engine is generic over.
///
/// Implemented for `f32` and `f64`. The file formats and the CLI use `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literals and tolerances.
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("f64 literal representable in scalar type")
    }

    /// Conversion from a count.
    fn from_count(count: usize) -> Self {
        Self::from_usize(count).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sums values in ascending order so the result does not depend on input order.
pub(crate) fn order_free_sum<T: Scalar>(values: &mut [T]) -> T {
    values.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    values.iter().fold(T::zero(), |acc, &v| acc + v)
}
