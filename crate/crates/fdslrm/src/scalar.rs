//! Scalar abstraction: every numerical routine in this crate is generic over
//! a floating-point type through [`Scalar`], so the same code runs in `f32`
//! and `f64`. Concrete aliases for the common `f64` instantiation live at the
//! crate root.

use std::fmt::{Debug, Display};

use num_traits::{Float, NumAssign};

pub trait Scalar: Float + NumAssign + Debug + Display + Send + Sync + 'static {}

impl<T> Scalar for T where T: Float + NumAssign + Debug + Display + Send + Sync + 'static {}

/// Converts an `f64` constant into the working scalar type.
#[inline]
pub(crate) fn real<F: Scalar>(x: f64) -> F {
    F::from(x).expect("constant not representable in scalar type")
}

/// Converts a count into the working scalar type.
#[inline]
pub(crate) fn count<F: Scalar>(n: usize) -> F {
    F::from(n).expect("count not representable in scalar type")
}

/// Euclidean inner product of two equal-length slices.
#[inline]
pub(crate) fn dot<F: Scalar>(a: &[F], b: &[F]) -> F {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b.iter())
        .fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Largest absolute entry of a slice (zero for an empty slice).
#[inline]
pub(crate) fn max_abs<F: Scalar>(xs: &[F]) -> F {
    xs.iter().fold(F::zero(), |acc, &x| acc.max(x.abs()))
}
