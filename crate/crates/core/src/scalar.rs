//! Scalar abstraction shared by every solver.
//!
//! All numerical code is written against [`Scalar`], which is implemented for
//! `f32` and `f64`. Random generation and file I/O happen in `f64` and are
//! converted at the boundary, so a given seed yields the same instance at
//! either precision (up to rounding).

use nalgebra as na;
use num_traits as nt;
use std::fmt;

pub trait Scalar:
    na::RealField + Copy + nt::FromPrimitive + nt::ToPrimitive + fmt::LowerExp + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        nt::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    #[inline]
    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    #[inline]
    fn absval(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    /// Tolerance applied to stored probability data (rows, initial distribution).
    fn prob_tol() -> Self {
        Self::lit(1e-12).max(Self::default_epsilon() * Self::lit(64.0))
    }

    /// Tolerance applied to distributions derived from features.
    fn derived_prob_tol() -> Self {
        Self::lit(1e-10).max(Self::default_epsilon() * Self::lit(256.0))
    }

    /// Default sup-norm convergence threshold for fixed-point solvers.
    fn default_tol() -> Self {
        Self::lit(1e-10).max(Self::default_epsilon() * Self::lit(100.0))
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Sup-norm of the difference of two equally sized slices.
pub(crate) fn sup_diff<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .fold(T::zero(), |m, (&x, &y)| m.max((x - y).absval()))
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
