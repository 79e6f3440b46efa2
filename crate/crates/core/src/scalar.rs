//! Numeric abstraction shared by every estimator.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type an observation can be stored in: `f32` or `f64`.
///
/// The CSV layer relies on `Display`/`FromStr` producing the shortest
/// representation that parses back to the same value, which holds for both
/// primitive float types.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + FromStr + Display + Debug + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for coordinates and config values.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable in every Scalar")
    }

    /// Widening conversion used for reports.
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Arithmetic mean, `None` for an empty iterator.
pub fn mean<T: Scalar>(values: impl IntoIterator<Item = T>) -> Option<T> {
    let mut sum = T::zero();
    let mut n = 0usize;
    for v in values {
        sum = sum + v;
        n += 1;
    }
    (n > 0).then(|| sum / T::of(n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_empty_is_none() {
        assert_eq!(mean::<f64>(std::iter::empty()), None);
        assert_eq!(mean([1.0f32, 2.0, 6.0]), Some(3.0));
    }
}
