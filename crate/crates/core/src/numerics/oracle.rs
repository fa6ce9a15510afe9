//! Wide-precision reference for the binary16 units.
//!
//! Each operation is computed in f64, rounded onto the binary16 grid with
//! `round_ties_even` (subnormal grid included), flushed, and encoded through
//! the `half` crate. This route shares no code with the integer
//! implementation in [`super::half`].

use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::half::{hf_add, hf_div, hf_mul, Half, CANONICAL_NAN};

fn flush_bits(bits: u16) -> u16 {
    if bits & 0x7C00 == 0 {
        bits & 0x8000
    } else {
        bits
    }
}

fn canonical(bits: u16) -> u16 {
    if bits & 0x7C00 == 0x7C00 && bits & 0x03FF != 0 {
        CANONICAL_NAN
    } else {
        bits
    }
}

/// Rounds a real to binary16 (RNE, IEEE subnormal grid), then flushes.
fn round_to_bits(v: f64) -> u16 {
    if v.is_nan() {
        return CANONICAL_NAN;
    }
    if v.is_infinite() || v == 0.0 {
        // exactly representable; the encoder handles these without rounding
        return f16::from_f64(v).to_bits();
    }
    let exp = ((v.to_bits() >> 52) & 0x7FF) as i32 - 1023;
    let quantum = 2f64.powi(exp.max(-14) - 10);
    let rounded = (v / quantum).round_ties_even() * quantum;
    if rounded.abs() > 65504.0 {
        return if v < 0.0 { 0xFC00 } else { 0x7C00 };
    }
    if rounded.abs() < 2f64.powi(-14) {
        return if v.is_sign_negative() { 0x8000 } else { 0 };
    }
    f16::from_f64(rounded).to_bits()
}

fn via_f64(x: u16, y: u16, op: impl Fn(f64, f64) -> f64) -> u16 {
    let a = f16::from_bits(flush_bits(x)).to_f64();
    let b = f16::from_bits(flush_bits(y)).to_f64();
    round_to_bits(op(a, b))
}

pub fn oracle_add(x: u16, y: u16) -> u16 {
    via_f64(x, y, |a, b| a + b)
}

pub fn oracle_mul(x: u16, y: u16) -> u16 {
    via_f64(x, y, |a, b| a * b)
}

pub fn oracle_div(x: u16, y: u16) -> u16 {
    via_f64(x, y, |a, b| a / b)
}

pub fn oracle_from_f64(v: f64) -> u16 {
    round_to_bits(v)
}

/// Mismatch counts from a random operand sweep.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepReport {
    pub pairs: u64,
    pub add_mismatches: u64,
    pub mul_mismatches: u64,
    pub div_mismatches: u64,
}

impl SweepReport {
    pub fn total_mismatches(&self) -> u64 {
        self.add_mismatches + self.mul_mismatches + self.div_mismatches
    }
}

/// Compares `hf_add`, `hf_mul` and `hf_div` with the oracle on `pairs`
/// random bit-pattern pairs.
pub fn sweep(pairs: u64, seed: u64) -> SweepReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SweepReport {
        pairs,
        ..Default::default()
    };
    for _ in 0..pairs {
        let x: u16 = rng.random();
        let y: u16 = rng.random();
        let (hx, hy) = (Half::from_bits(x), Half::from_bits(y));
        if canonical(hf_add(hx, hy).to_bits()) != oracle_add(x, y) {
            report.add_mismatches += 1;
        }
        if canonical(hf_mul(hx, hy).to_bits()) != oracle_mul(x, y) {
            report.mul_mismatches += 1;
        }
        if canonical(hf_div(hx, hy).to_bits()) != oracle_div(x, y) {
            report.div_mismatches += 1;
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_sweep_matches() {
        let r = sweep(200_000, 7);
        assert_eq!(r.total_mismatches(), 0, "{r:?}");
    }

    #[test]
    fn exhaustive_conversion_round_trip() {
        for bits in 0..=u16::MAX {
            let h = Half::from_bits(bits);
            if h.is_nan() {
                continue;
            }
            assert_eq!(Half::from_f64(h.to_f64()).to_bits(), h.to_bits());
            assert_eq!(oracle_from_f64(h.to_f64()), h.to_bits());
        }
    }

    #[test]
    fn commutativity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50_000 {
            let x = Half::from_bits(rng.random());
            let y = Half::from_bits(rng.random());
            assert_eq!(canonical(hf_add(x, y).to_bits()), canonical(hf_add(y, x).to_bits()));
            assert_eq!(canonical(hf_mul(x, y).to_bits()), canonical(hf_mul(y, x).to_bits()));
        }
    }

    #[test]
    fn conversion_from_random_reals_matches() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200_000 {
            let e: i32 = rng.random_range(-30..18);
            let m: f64 = rng.random_range(1.0..2.0);
            let v = if rng.random() { m } else { -m } * 2f64.powi(e);
            assert_eq!(Half::from_f64(v).to_bits(), oracle_from_f64(v), "{v}");
        }
    }
}
