//! Scalar abstraction for the numeric layers (arc weights, flow costs,
//! model parameters).

use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::NumAssign
    + Debug
    + Display
    + Default
    + Sum
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`; used to bring feature values and
    /// tolerances into the working precision.
    fn of(v: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(v).expect("f64 converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("Scalar converts to f64")
    }

    /// Machine epsilon scaled tolerance used for optimality comparisons.
    fn rel_tol() -> Self;
}

impl Scalar for f32 {
    fn rel_tol() -> Self {
        1e-5
    }
}

impl Scalar for f64 {
    fn rel_tol() -> Self {
        1e-9
    }
}

/// Inner product accumulated left to right.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

/// Total order wrapper so scalars can live in a `BinaryHeap`. NaN compares
/// equal to everything; callers never push NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Ordered<T>(pub T);

impl<T: Scalar> Eq for Ordered<T> {}

impl<T: Scalar> PartialOrd for Ordered<T> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for Ordered<T> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .partial_cmp(&other.0)
            .unwrap_or(std::cmp::Ordering::Equal)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dot_is_left_to_right() {
        let a = [1.0f64, 2.0, 3.0];
        let b = [4.0f64, 5.0, 6.0];
        assert_eq!(dot(&a, &b), 32.0);
        let a32 = [1.0f32, 2.0];
        assert_eq!(dot(&a32, &a32), 5.0);
    }

    #[test]
    fn ordered_sorts_floats() {
        let mut v = vec![Ordered(3.0f64), Ordered(-1.0), Ordered(2.5)];
        v.sort();
        assert_eq!(v.iter().map(|o| o.0).collect::<Vec<_>>(), vec![-1.0, 2.5, 3.0]);
    }
}
