//! Scalar abstraction so the core math runs on `f32` or `f64`.
//!
//! Everything numerical in this crate is generic over [`Scalar`]. The trait
//! bundles the nalgebra `RealField` operations with `num-traits` conversions
//! and a seeded standard-normal sampler. The conic backend always solves in
//! double precision internally regardless of `T` (see the `conic` module),
//! so `f32` instantiations trade accuracy only in the surrounding algebra.

use nalgebra::{Complex, RealField};
use num_traits::{FromPrimitive, ToPrimitive};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

pub trait Scalar:
    RealField
    + Copy
    + Default
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Debug
    + Display
    + LowerExp
    + Send
    + Sync
    + 'static
{
    /// Draw one standard-normal sample from `rng`.
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Shorthand for lossy conversion of `f64` constants.
    fn c(v: f64) -> Self {
        Self::from_f64(v).expect("constant representable in scalar type")
    }
}

impl Scalar for f64 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

impl Scalar for f32 {
    fn std_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
        StandardNormal.sample(rng)
    }
}

/// Circularly-symmetric complex Gaussian CN(0, 1): independent real and
/// imaginary parts of variance 1/2.
pub fn complex_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let half = T::c(0.5).sqrt();
    let re = T::std_normal(rng) * half;
    let im = T::std_normal(rng) * half;
    Complex::new(re, im)
}
