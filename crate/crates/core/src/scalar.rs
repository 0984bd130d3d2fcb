//! Probability arithmetic: `f64` by default, exact rationals on request.

use num::{BigInt, BigRational, ToPrimitive, Zero};

pub trait Scalar: Clone + Send + Sync + PartialEq + std::fmt::Debug + 'static {
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    /// `num / den`; `den > 0`.
    fn ratio(num: u64, den: u64) -> Self;
    fn add_assign(&mut self, other: &Self);
    fn mul(&self, other: &Self) -> Self;
    fn div(&self, other: &Self) -> Self;
    fn is_zero(&self) -> bool;
    fn to_f64(&self) -> f64;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }
    #[inline]
    fn add_assign(&mut self, other: &Self) {
        *self += *other;
    }
    #[inline]
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    #[inline]
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num::One::one()
    }
    fn ratio(num: u64, den: u64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn mul(&self, other: &Self) -> Self {
        self * other
    }
    fn div(&self, other: &Self) -> Self {
        self / other
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios_agree() {
        let a = <BigRational as Scalar>::ratio(1, 3);
        let b = <f64 as Scalar>::ratio(1, 3);
        assert!((Scalar::to_f64(&a) - b).abs() < 1e-16);
        let mut s = <BigRational as Scalar>::zero();
        for _ in 0..3 {
            s.add_assign(&a);
        }
        assert_eq!(s, <BigRational as Scalar>::one());
    }
}
