//! Hardware arithmetic: fixed point for the front end, subnormal-free
//! binary16 for everything after it.

pub mod counters;
mod fixed;
mod half;
pub mod oracle;

pub use self::fixed::{Fixed, Fixed16x8};
pub use self::half::{
    hf_add, hf_div, hf_from_real, hf_mul, hf_sub, hf_to_real, Half, CANONICAL_NAN,
};
