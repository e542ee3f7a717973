//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};

use nalgebra::{Complex, DMatrix, DVector, RealField, RowDVector};
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
}

impl Real for f32 {}
impl Real for f64 {}

pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;
pub type CRow<T> = RowDVector<Complex<T>>;

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().expect("scalar convertible to f64")
}

/// `e^{j theta}`.
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

#[inline]
pub fn arg<T: Real>(z: Complex<T>) -> T {
    z.im.atan2(z.re)
}

#[inline]
pub fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub fn creal<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

/// `|z|`.
#[inline]
pub fn cabs<T: Real>(z: Complex<T>) -> T {
    z.re.hypot(z.im)
}

/// Machine epsilon of `T`.
#[inline]
pub fn epsilon<T: Real>() -> T {
    T::default_epsilon()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cis_and_arg_are_inverse() {
        for k in 0..16 {
            let theta = -3.0 + 0.37 * k as f64;
            let z = cis(theta);
            assert!((z.norm() - 1.0).abs() < 1e-15);
            assert!((arg(z) - theta).abs() < 1e-12);
        }
        let z32 = cis(0.5f32);
        assert!((arg(z32) - 0.5).abs() < 1e-6);
    }
}
