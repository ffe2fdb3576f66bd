//! Probability scalar abstraction.
//!
//! Tables, survival products and estimators are written once against
//! [`Scalar`] and instantiated with `f64` for simulation work and with
//! [`Rational`](crate::Rational) when an exact population identity has to
//! hold with no rounding at all.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Num, ToPrimitive};

pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    /// `num / den` in this scalar type. `den` must be non-zero.
    fn from_ratio(num: i64, den: i64) -> Self;

    fn to_f64(&self) -> f64;

    fn from_count(n: u64) -> Self {
        Self::from_ratio(n as i64, 1)
    }

    /// True iff the value lies in the closed unit interval.
    fn is_probability(&self) -> bool {
        *self >= Self::zero() && *self <= Self::one()
    }
}

impl Scalar for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_count(n: u64) -> Self {
        n as f64
    }
}

impl Scalar for f32 {
    fn from_ratio(num: i64, den: i64) -> Self {
        (num as f64 / den as f64) as f32
    }

    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }

    fn from_count(n: u64) -> Self {
        n as f32
    }
}

impl Scalar for BigRational {
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Sum of an iterator of scalars.
pub(crate) fn sum<S: Scalar>(values: impl IntoIterator<Item = S>) -> S {
    values.into_iter().fold(S::zero(), |acc, v| acc + v)
}
