//! Scalar abstraction shared by the group arithmetic.
//!
//! Group and Lie algebra coordinates are generic over [`Scalar`], which is
//! implemented for `f32`, `f64` and the exact rationals `Ratio<i64>` /
//! `BigRational`. Exact types make lattice membership decidable.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

pub trait Scalar:
    Num + Signed + Clone + Debug + PartialOrd + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Largest integer not above `self`, in the same type.
    fn floor_s(&self) -> Self;

    fn from_int(v: i64) -> Self {
        Self::from_i64(v).expect("integer fits scalar type")
    }

    fn half() -> Self {
        Self::one() / (Self::one() + Self::one())
    }

    fn to_f64_lossy(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Whether the value is an integer, exactly for rationals and to
    /// `tol` for floats.
    fn is_integral(&self, tol: f64) -> bool;
}

impl Scalar for f64 {
    fn floor_s(&self) -> Self {
        self.floor()
    }

    fn is_integral(&self, tol: f64) -> bool {
        (self - self.round()).abs() <= tol
    }
}

impl Scalar for f32 {
    fn floor_s(&self) -> Self {
        self.floor()
    }

    fn is_integral(&self, tol: f64) -> bool {
        ((self - self.round()).abs() as f64) <= tol
    }
}

impl Scalar for Ratio<i64> {
    fn floor_s(&self) -> Self {
        self.floor()
    }

    fn is_integral(&self, _tol: f64) -> bool {
        self.is_integer()
    }
}

impl Scalar for BigRational {
    fn floor_s(&self) -> Self {
        self.floor()
    }

    fn from_int(v: i64) -> Self {
        BigRational::from_integer(BigInt::from(v))
    }

    fn is_integral(&self, _tol: f64) -> bool {
        self.is_integer()
    }
}

/// Dot product of two equal-length slices.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |acc, (x, y)| acc + x.clone() * y.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_matches_across_types() {
        assert_eq!((-1.5f64).floor_s(), -2.0);
        assert_eq!(Ratio::new(-3i64, 2).floor_s(), Ratio::from_integer(-2));
        assert_eq!(
            BigRational::new(BigInt::from(7), BigInt::from(2)).floor_s(),
            BigRational::from_integer(BigInt::from(3))
        );
    }

    #[test]
    fn half_is_exact_for_rationals() {
        assert_eq!(Ratio::<i64>::half(), Ratio::new(1, 2));
        assert_eq!(f64::half(), 0.5);
    }
}
