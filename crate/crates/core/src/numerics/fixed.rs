use std::fmt;
use std::ops::{Add, Neg, Sub};

/// Signed fixed-point value with `FRAC` fractional bits in a 64-bit word.
///
/// Addition and subtraction are exact (wrapping at the word width); nothing
/// in this type ever rounds except [`Fixed::from_f64`].
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Fixed<const FRAC: u32>(i64);

/// 16 integer bits + 8 fractional bits, used for homography coefficients.
pub type Fixed16x8 = Fixed<8>;

impl<const FRAC: u32> Fixed<FRAC> {
    pub const ONE: Self = Fixed(1 << FRAC);

    pub const fn from_raw(raw: i64) -> Self {
        Fixed(raw)
    }

    pub const fn from_int(v: i64) -> Self {
        Fixed(v << FRAC)
    }

    /// Nearest representable value (ties away from zero).
    pub fn from_f64(v: f64) -> Self {
        Fixed((v * (1u64 << FRAC) as f64).round() as i64)
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / (1u64 << FRAC) as f64
    }

    /// Integer part, rounding toward negative infinity.
    pub const fn floor(self) -> i64 {
        self.0 >> FRAC
    }

    /// Fractional part as a raw count of `2^-FRAC` units, in `0..2^FRAC`.
    pub const fn frac_raw(self) -> i64 {
        self.0 & ((1 << FRAC) - 1)
    }

    /// Exact product with an integer.
    pub fn mul_int(self, k: i64) -> Self {
        Fixed(self.0.wrapping_mul(k))
    }
}

impl<const FRAC: u32> Add for Fixed<FRAC> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Fixed(self.0.wrapping_add(rhs.0))
    }
}

impl<const FRAC: u32> Sub for Fixed<FRAC> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Fixed(self.0.wrapping_sub(rhs.0))
    }
}

impl<const FRAC: u32> Neg for Fixed<FRAC> {
    type Output = Self;
    fn neg(self) -> Self {
        Fixed(self.0.wrapping_neg())
    }
}

impl<const FRAC: u32> fmt::Debug for Fixed<FRAC> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Fixed<{}>({})", FRAC, self.to_f64())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn add_sub_exact_against_wide_ints(a in -(1i64 << 40)..(1i64 << 40), b in -(1i64 << 40)..(1i64 << 40)) {
            let x = Fixed16x8::from_raw(a);
            let y = Fixed16x8::from_raw(b);
            prop_assert_eq!((x + y).raw() as i128, a as i128 + b as i128);
            prop_assert_eq!((x - y).raw() as i128, a as i128 - b as i128);
        }
    }

    #[test]
    fn floor_and_fraction() {
        let v = Fixed16x8::from_f64(-1.25);
        assert_eq!(v.floor(), -2);
        assert_eq!(v.frac_raw(), 192);
        assert_eq!(Fixed16x8::from_f64(3.5).frac_raw(), 128);
    }
}
