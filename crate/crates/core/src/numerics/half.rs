//! binary16 arithmetic without subnormal support.
//!
//! Every result is rounded to nearest-even on the IEEE binary16 grid and then
//! flushed to a signed zero if it lands in the subnormal range. Subnormal
//! operand patterns read as zero. Overflow produces infinity.
//!
//! The arithmetic is done on integer significands, the way the hardware does
//! it: multiplication and division normalize by at most one position, only
//! addition needs a leading-zero count.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, Sub, SubAssign};

use num_traits::{Num, One, Zero};

use super::counters;

const SIGN_MASK: u16 = 0x8000;
const EXP_MASK: u16 = 0x7C00;
const MAN_MASK: u16 = 0x03FF;
const EXP_BIAS: i32 = 15;
const EXP_MIN: i32 = -14;
const EXP_MAX: i32 = 15;

/// The NaN pattern produced by every operation.
pub const CANONICAL_NAN: u16 = 0x7E00;

/// A binary16 value whose exponent field is never zero unless the value is ±0.
#[derive(Clone, Copy, Default)]
pub struct Half(u16);

enum Unpacked {
    Nan,
    Inf(bool),
    Zero(bool),
    /// `sig` carries the implicit bit: 11 bits, value = sig / 2^10 * 2^exp.
    Normal { neg: bool, exp: i32, sig: u64 },
}

impl Half {
    pub const ZERO: Half = Half(0);
    pub const ONE: Half = Half(0x3C00);
    pub const INFINITY: Half = Half(0x7C00);
    pub const NEG_INFINITY: Half = Half(0xFC00);
    pub const NAN: Half = Half(CANONICAL_NAN);
    /// Largest finite value, 65504.
    pub const MAX: Half = Half(0x7BFF);
    /// Smallest positive value, 2^-14.
    pub const MIN_POSITIVE: Half = Half(0x0400);

    /// Builds a value from a raw pattern. Subnormal patterns are flushed.
    pub fn from_bits(bits: u16) -> Half {
        if bits & EXP_MASK == 0 {
            Half(bits & SIGN_MASK)
        } else {
            Half(bits)
        }
    }

    pub fn to_bits(self) -> u16 {
        self.0
    }

    pub fn is_nan(self) -> bool {
        self.0 & EXP_MASK == EXP_MASK && self.0 & MAN_MASK != 0
    }

    pub fn is_infinite(self) -> bool {
        self.0 & !SIGN_MASK == EXP_MASK
    }

    pub fn is_finite(self) -> bool {
        self.0 & EXP_MASK != EXP_MASK
    }

    pub fn is_sign_negative(self) -> bool {
        self.0 & SIGN_MASK != 0
    }

    pub fn abs(self) -> Half {
        Half(self.0 & !SIGN_MASK)
    }

    fn unpack(self) -> Unpacked {
        let neg = self.is_sign_negative();
        let exp_field = (self.0 & EXP_MASK) >> 10;
        let man = (self.0 & MAN_MASK) as u64;
        match exp_field {
            0 => Unpacked::Zero(neg),
            31 if man != 0 => Unpacked::Nan,
            31 => Unpacked::Inf(neg),
            e => Unpacked::Normal {
                neg,
                exp: e as i32 - EXP_BIAS,
                sig: man | 0x400,
            },
        }
    }

    fn signed_zero(neg: bool) -> Half {
        Half(if neg { SIGN_MASK } else { 0 })
    }

    fn signed_inf(neg: bool) -> Half {
        Half(if neg { 0xFC00 } else { 0x7C00 })
    }

    /// Rounds `sig / 2^63 * 2^exp` (MSB of `sig` set, sticky folded into bit 0).
    fn round_pack(neg: bool, exp: i32, sig: u64) -> Half {
        debug_assert!(sig >> 63 == 1);
        if exp > EXP_MAX {
            return Half::signed_inf(neg);
        }
        if exp < EXP_MIN - 1 {
            return Half::signed_zero(neg);
        }
        if exp == EXP_MIN - 1 {
            // Only values at or above the midpoint between the largest
            // subnormal and 2^-14 round to a normal number.
            return if sig >> 53 == 0x7FF {
                Half(if neg { SIGN_MASK } else { 0 } | 0x0400)
            } else {
                Half::signed_zero(neg)
            };
        }
        let mut exp = exp;
        let mut man = sig >> 53;
        let rem = sig & ((1u64 << 53) - 1);
        let halfway = 1u64 << 52;
        if rem > halfway || (rem == halfway && man & 1 == 1) {
            man += 1;
            if man == 0x800 {
                man = 0x400;
                exp += 1;
                if exp > EXP_MAX {
                    return Half::signed_inf(neg);
                }
            }
        }
        let bits = ((exp + EXP_BIAS) as u16) << 10 | (man as u16 & MAN_MASK);
        Half(if neg { bits | SIGN_MASK } else { bits })
    }

    /// Converts a real with round-to-nearest-even and flush-to-zero.
    pub fn from_f64(v: f64) -> Half {
        let bits = v.to_bits();
        let neg = bits >> 63 == 1;
        let exp_field = ((bits >> 52) & 0x7FF) as i32;
        let man = bits & ((1u64 << 52) - 1);
        match exp_field {
            0x7FF if man != 0 => Half::NAN,
            0x7FF => Half::signed_inf(neg),
            // zero and f64 subnormals are far below the binary16 range
            0 => Half::signed_zero(neg),
            e => Half::round_pack(neg, e - 1023, (man | 1u64 << 52) << 11),
        }
    }

    pub fn from_f32(v: f32) -> Half {
        Half::from_f64(v as f64)
    }

    /// Exact conversion to f64.
    pub fn to_f64(self) -> f64 {
        match self.unpack() {
            Unpacked::Nan => f64::NAN,
            Unpacked::Inf(neg) => {
                if neg {
                    f64::NEG_INFINITY
                } else {
                    f64::INFINITY
                }
            }
            Unpacked::Zero(neg) => {
                if neg {
                    -0.0
                } else {
                    0.0
                }
            }
            Unpacked::Normal { neg, exp, sig } => {
                let m = sig as f64 * (2.0f64).powi(exp - 10);
                if neg {
                    -m
                } else {
                    m
                }
            }
        }
    }

    pub fn to_f32(self) -> f32 {
        self.to_f64() as f32
    }
}

/// Sum rounded to nearest-even, subnormal results flushed.
pub fn hf_add(x: Half, y: Half) -> Half {
    counters::record_add();
    add_impl(x, y)
}

/// Difference; identical to adding the negation.
pub fn hf_sub(x: Half, y: Half) -> Half {
    counters::record_add();
    add_impl(x, -y)
}

fn add_impl(x: Half, y: Half) -> Half {
    use Unpacked::*;
    match (x.unpack(), y.unpack()) {
        (Nan, _) | (_, Nan) => Half::NAN,
        (Inf(a), Inf(b)) => {
            if a == b {
                Half::signed_inf(a)
            } else {
                Half::NAN
            }
        }
        (Inf(a), _) | (_, Inf(a)) => Half::signed_inf(a),
        (Zero(a), Zero(b)) => Half::signed_zero(a && b),
        (Zero(_), Normal { .. }) => Half(y.0),
        (Normal { .. }, Zero(_)) => Half(x.0),
        (
            Normal {
                neg: na,
                exp: ea,
                sig: sa,
            },
            Normal {
                neg: nb,
                exp: eb,
                sig: sb,
            },
        ) => {
            // order by magnitude so the subtraction below never goes negative
            let ((neg_big, exp_big, sig_big), (neg_small, exp_small, sig_small)) =
                if (ea, sa) >= (eb, sb) {
                    ((na, ea, sa), (nb, eb, sb))
                } else {
                    ((nb, eb, sb), (na, ea, sa))
                };
            // significands sit at bits 62..52; alignment shifts are at most 29
            // so nothing falls off the bottom
            let big = sig_big << 52;
            let small = (sig_small << 52) >> (exp_big - exp_small) as u32;
            let sum = if neg_big == neg_small {
                big + small
            } else {
                big - small
            };
            if sum == 0 {
                return Half::ZERO;
            }
            let lz = sum.leading_zeros();
            Half::round_pack(neg_big, exp_big + 1 - lz as i32, sum << lz)
        }
    }
}

/// Product rounded to nearest-even, subnormal results flushed.
pub fn hf_mul(x: Half, y: Half) -> Half {
    counters::record_mul();
    use Unpacked::*;
    let neg = x.is_sign_negative() != y.is_sign_negative();
    match (x.unpack(), y.unpack()) {
        (Nan, _) | (_, Nan) => Half::NAN,
        (Inf(_), Zero(_)) | (Zero(_), Inf(_)) => Half::NAN,
        (Inf(_), _) | (_, Inf(_)) => Half::signed_inf(neg),
        (Zero(_), _) | (_, Zero(_)) => Half::signed_zero(neg),
        (Normal { exp: ea, sig: sa, .. }, Normal { exp: eb, sig: sb, .. }) => {
            // both MSBs are set, so the product MSB is at bit 21 or bit 20
            let p = sa * sb;
            if p >> 21 == 1 {
                Half::round_pack(neg, ea + eb + 1, p << 42)
            } else {
                Half::round_pack(neg, ea + eb, p << 43)
            }
        }
    }
}

/// Quotient rounded to nearest-even, subnormal results flushed.
pub fn hf_div(x: Half, y: Half) -> Half {
    counters::record_div();
    use Unpacked::*;
    let neg = x.is_sign_negative() != y.is_sign_negative();
    match (x.unpack(), y.unpack()) {
        (Nan, _) | (_, Nan) => Half::NAN,
        (Inf(_), Inf(_)) | (Zero(_), Zero(_)) => Half::NAN,
        (Inf(_), _) | (_, Zero(_)) => Half::signed_inf(neg),
        (_, Inf(_)) | (Zero(_), _) => Half::signed_zero(neg),
        (Normal { exp: ea, sig: sa, .. }, Normal { exp: eb, sig: sb, .. }) => {
            let num = sa << 52;
            let q = num / sb;
            let sticky = (num % sb != 0) as u64;
            // the quotient of two normalized significands lies in (1/2, 2):
            // its MSB is at bit 52 or bit 51
            if q >> 52 == 1 {
                Half::round_pack(neg, ea - eb, (q << 11) | sticky)
            } else {
                Half::round_pack(neg, ea - eb - 1, (q << 12) | sticky)
            }
        }
    }
}

pub fn hf_from_real(v: f64) -> Half {
    Half::from_f64(v)
}

pub fn hf_to_real(h: Half) -> f64 {
    h.to_f64()
}

impl fmt::Debug for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Half({:?} = {:#06x})", self.to_f64(), self.0)
    }
}

impl fmt::Display for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(&self.to_f64(), f)
    }
}

impl PartialEq for Half {
    fn eq(&self, other: &Half) -> bool {
        self.to_f64() == other.to_f64()
    }
}

impl PartialOrd for Half {
    fn partial_cmp(&self, other: &Half) -> Option<Ordering> {
        self.to_f64().partial_cmp(&other.to_f64())
    }
}

impl Neg for Half {
    type Output = Half;
    fn neg(self) -> Half {
        Half(self.0 ^ SIGN_MASK)
    }
}

impl Add for Half {
    type Output = Half;
    fn add(self, rhs: Half) -> Half {
        hf_add(self, rhs)
    }
}

impl Sub for Half {
    type Output = Half;
    fn sub(self, rhs: Half) -> Half {
        hf_sub(self, rhs)
    }
}

impl Mul for Half {
    type Output = Half;
    fn mul(self, rhs: Half) -> Half {
        hf_mul(self, rhs)
    }
}

impl Div for Half {
    type Output = Half;
    fn div(self, rhs: Half) -> Half {
        hf_div(self, rhs)
    }
}

impl Rem for Half {
    type Output = Half;
    fn rem(self, rhs: Half) -> Half {
        Half::from_f64(self.to_f64() % rhs.to_f64())
    }
}

impl AddAssign for Half {
    fn add_assign(&mut self, rhs: Half) {
        *self = *self + rhs;
    }
}

impl SubAssign for Half {
    fn sub_assign(&mut self, rhs: Half) {
        *self = *self - rhs;
    }
}

impl MulAssign for Half {
    fn mul_assign(&mut self, rhs: Half) {
        *self = *self * rhs;
    }
}

impl DivAssign for Half {
    fn div_assign(&mut self, rhs: Half) {
        *self = *self / rhs;
    }
}

impl Zero for Half {
    fn zero() -> Half {
        Half::ZERO
    }
    fn is_zero(&self) -> bool {
        self.0 & !SIGN_MASK == 0
    }
}

impl One for Half {
    fn one() -> Half {
        Half::ONE
    }
}

impl Num for Half {
    type FromStrRadixErr = <f64 as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Half, Self::FromStrRadixErr> {
        f64::from_str_radix(s, radix).map(Half::from_f64)
    }
}
