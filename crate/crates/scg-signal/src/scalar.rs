//! Scalar abstraction shared by every numeric kernel in the crate.
//!
//! Solvers, equilibrium checks and flow decompositions are written once,
//! generically, and instantiated either with [`num_rational::BigRational`]
//! (exact mode: ties and equilibrium membership are decided exactly, all
//! tolerances are zero) or with `f64`/`f32` (float mode: documented
//! tolerances apply).

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Clone
    + Debug
    + Display
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Send
    + Sync
    + 'static
{
    /// True when arithmetic is exact and every tolerance below is zero.
    const EXACT: bool;

    fn from_rational(value: &BigRational) -> Self;

    /// Exact image of this value as a rational (`f64::from_float` is exact).
    fn to_rational(&self) -> BigRational;

    fn to_f64(&self) -> f64;

    fn from_int(value: i64) -> Self;

    fn abs(&self) -> Self;

    /// Tolerance for validating probability sums and scheme consistency.
    fn validation_tol() -> Self;

    /// Feasibility tolerance for LP residual checks.
    fn lp_tol() -> Self;

    /// Residual flows below this are clamped to zero during decomposition.
    fn drop_tol() -> Self;

    fn ratio(num: i64, den: i64) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_rational(value: &BigRational) -> Self {
        ToPrimitive::to_f64(value).expect("rational out of f64 range")
    }

    fn to_rational(&self) -> BigRational {
        BigRational::from_float(*self).expect("non-finite f64 has no rational value")
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn from_int(value: i64) -> Self {
        value as f64
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn validation_tol() -> Self {
        1e-9
    }

    fn lp_tol() -> Self {
        1e-7
    }

    fn drop_tol() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;

    fn from_rational(value: &BigRational) -> Self {
        ToPrimitive::to_f64(value).expect("rational out of range") as f32
    }

    fn to_rational(&self) -> BigRational {
        BigRational::from_float(*self as f64).expect("non-finite f32 has no rational value")
    }

    fn to_f64(&self) -> f64 {
        *self as f64
    }

    fn from_int(value: i64) -> Self {
        value as f32
    }

    fn abs(&self) -> Self {
        f32::abs(*self)
    }

    fn validation_tol() -> Self {
        1e-4
    }

    fn lp_tol() -> Self {
        1e-3
    }

    fn drop_tol() -> Self {
        1e-6
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn from_rational(value: &BigRational) -> Self {
        value.clone()
    }

    fn to_rational(&self) -> BigRational {
        self.clone()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn from_int(value: i64) -> Self {
        BigRational::from_integer(value.into())
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }

    fn validation_tol() -> Self {
        Self::zero()
    }

    fn lp_tol() -> Self {
        Self::zero()
    }

    fn drop_tol() -> Self {
        Self::zero()
    }
}

/// Total-order comparison; panics on NaN, which is always a bug here.
pub fn cmp<T: Scalar>(a: &T, b: &T) -> std::cmp::Ordering {
    a.partial_cmp(b).expect("NaN in scalar comparison")
}

/// `|a - b| <= tol`.
pub fn approx_eq<T: Scalar>(a: &T, b: &T, tol: &T) -> bool {
    (a.clone() - b.clone()).abs() <= *tol
}
