//! Scalar abstraction for exact linear algebra.
//!
//! Matrices are generic over [`Scalar`]. A scalar carries a `Context`
//! describing which field it lives in; for GF(2^m) that is the field spec,
//! for exact rationals it is `()`. The context lets a matrix produce zeros
//! and ones even when it has no entries.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, Zero};

pub trait Scalar:
    Clone
    + PartialEq
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
{
    type Context: Copy + PartialEq + Debug;

    fn context(&self) -> Self::Context;
    fn zero_in(ctx: Self::Context) -> Self;
    fn one_in(ctx: Self::Context) -> Self;
    fn is_zero(&self) -> bool;
    /// Multiplicative inverse, `None` for zero.
    fn try_inverse(&self) -> Option<Self>;
}

impl<T> Scalar for Ratio<T>
where
    T: Clone + Integer + Signed + Debug,
{
    type Context = ();

    fn context(&self) -> Self::Context {}

    fn zero_in(_: ()) -> Self {
        Zero::zero()
    }

    fn one_in(_: ()) -> Self {
        One::one()
    }

    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }

    fn try_inverse(&self) -> Option<Self> {
        if Zero::is_zero(self) {
            None
        } else {
            Some(self.recip())
        }
    }
}
