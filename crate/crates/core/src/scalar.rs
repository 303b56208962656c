//! Scalar abstraction: the numeric kernels are generic over the real field.
//!
//! Everything in this crate computes over `Complex<T>` with `T: Scalar`.
//! `f64` is the working type (see the aliases at the crate root); `f32` is
//! supported for callers that can live with the reduced precision.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, NumAssign};
use rand::Rng;

/// Real scalar underlying all matrix arithmetic: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + NumAssign + Sum + Send + Sync + Debug + Display + 'static
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    /// Standard normal draw (Box–Muller over the generator's native uniform).
    fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self;

    /// Uniform draw in `[0, 1)`.
    fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn from_f64(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }

            fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> Self {
                loop {
                    let u1: $t = rng.gen();
                    let u2: $t = rng.gen();
                    if u1 > <$t>::EPSILON {
                        let r = (-2.0 * u1.ln()).sqrt();
                        return r * (2.0 * std::f64::consts::PI as $t * u2).cos();
                    }
                }
            }

            #[inline]
            fn uniform_01<R: Rng + ?Sized>(rng: &mut R) -> Self {
                rng.gen()
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

/// Circularly-symmetric standard complex normal: `E[|z|^2] = 1`.
#[inline]
pub fn standard_complex_normal<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Complex<T> {
    let half = T::from_f64(0.5).sqrt();
    Complex::new(
        T::standard_normal(rng) * half,
        T::standard_normal(rng) * half,
    )
}
