//! Front end in exact fixed point: alignment, optional denoise, half sum
//! and half difference.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::kernels::{self, conv2_dense, CropSide, FixedWord};
use crate::numerics::Fixed16x8;
use crate::scalar::Sample;
use crate::streaming::{stream_conv, NodeReport, PixelStream};

/// Default number of source lines the alignment stage may look across.
pub const HOMOGRAPHY_LINE_BUDGET: usize = 8;

/// Fractional bits of bilinear output (8 per axis).
const BILINEAR_FRAC: u32 = 16;

/// Affine alignment with 16.8 fixed-point coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography {
    pub coef: [Fixed16x8; 6],
    pub line_budget: usize,
}

impl Homography {
    pub fn from_f64(h: [f64; 6]) -> Self {
        Homography {
            coef: h.map(Fixed16x8::from_f64),
            line_budget: HOMOGRAPHY_LINE_BUDGET,
        }
    }

    pub fn identity() -> Self {
        Self::from_f64(crate::pipeline::params::IDENTITY_HOMOGRAPHY)
    }

    /// Source position of output pixel `(x, y)`, 8 fractional bits.
    fn source(&self, x: usize, y: usize) -> (Fixed16x8, Fixed16x8) {
        let c = &self.coef;
        let (x, y) = (x as i64, y as i64);
        (
            c[0].mul_int(x) + c[1].mul_int(y) + c[2],
            c[3].mul_int(x) + c[4].mul_int(y) + c[5],
        )
    }

    /// Largest distance in lines between an output row and a source row it
    /// reads, over the whole frame.
    pub fn lines_needed(&self, width: usize, height: usize) -> usize {
        let mut worst = 0;
        for y in 0..height {
            for x in [0, width - 1] {
                let (_, sy) = self.source(x, y);
                for r in [sy.floor(), sy.floor() + 1] {
                    let r = r.clamp(0, height as i64 - 1);
                    worst = worst.max((r - y as i64).unsigned_abs() as usize);
                }
            }
        }
        worst
    }
}

/// A plane of raw fixed-point words sharing `frac` fractional bits.
#[derive(Clone, Debug, PartialEq)]
pub struct FixedPlane {
    pub frac: u32,
    pub data: Image<FixedWord>,
}

impl FixedPlane {
    pub fn to_f64(&self) -> Image<f64> {
        let s = (1u64 << self.frac) as f64;
        self.data.map(|v| v.0 as f64 / s)
    }

    /// Single rounding into the pipeline scalar.
    pub fn to_samples<T: Sample>(&self) -> Image<T> {
        let s = (1u64 << self.frac) as f64;
        self.data.map(|v| T::from_f64(v.0 as f64 / s))
    }

    fn zip(&self, other: &FixedPlane, f: impl Fn(i64, i64) -> i64) -> FixedPlane {
        assert_eq!(self.frac, other.frac);
        FixedPlane {
            frac: self.frac,
            data: self.data.zip_map(&other.data, |a, b| FixedWord(f(a.0, b.0))).expect("same dims"),
        }
    }

    fn shift_frac(&self, extra: u32) -> FixedPlane {
        FixedPlane {
            frac: self.frac + extra,
            data: self.data.map(|v| FixedWord(v.0 << extra)),
        }
    }

    /// Halving is free: one more fractional bit.
    fn halve(mut self) -> FixedPlane {
        self.frac += 1;
        self
    }
}

/// Bilinear resampling of `img` through `h`, replicate-edge outside the frame.
pub fn apply_homography(img: &Image<u8>, h: &Homography) -> Result<FixedPlane> {
    let needed = h.lines_needed(img.width, img.height);
    if needed > h.line_budget {
        return Err(Error::HomographyExceedsBuffer {
            needed,
            budget: h.line_budget,
        });
    }
    let one = Fixed16x8::ONE.raw();
    let data = Image::from_fn(img.width, img.height, |x, y| {
        let (sx, sy) = h.source(x, y);
        let (x0, y0) = (sx.floor() as isize, sy.floor() as isize);
        let (fx, fy) = (sx.frac_raw(), sy.frac_raw());
        let p = |dx: isize, dy: isize| img.get_clamped(x0 + dx, y0 + dy) as i64;
        let top = (one - fx) * p(0, 0) + fx * p(1, 0);
        let bottom = (one - fx) * p(0, 1) + fx * p(1, 1);
        FixedWord((one - fy) * top + fy * bottom)
    });
    Ok(FixedPlane {
        frac: BILINEAR_FRAC,
        data,
    })
}

fn lift(img: &Image<u8>) -> FixedPlane {
    FixedPlane {
        frac: BILINEAR_FRAC,
        data: img.map(|v| FixedWord((v as i64) << BILINEAR_FRAC)),
    }
}

/// `Gaussian(X - Box(X))`, dense.
pub fn denoise(x: &FixedPlane) -> Result<FixedPlane> {
    let boxed = FixedPlane {
        frac: x.frac + 2,
        data: conv2_dense(&x.data, &kernels::box2(CropSide::TopLeft))?,
    };
    let hp = x.shift_frac(2).zip(&boxed, |a, b| a - b);
    Ok(FixedPlane {
        frac: hp.frac + 8,
        data: conv2_dense(&hp.data, &kernels::gaussian5())?,
    })
}

/// Streaming form of [`denoise`], with the node reports.
pub fn denoise_streaming(x: &FixedPlane, tag: &str) -> Result<(FixedPlane, Vec<NodeReport>)> {
    let s = PixelStream::from_image(&x.data);
    let (boxed, mut r1) = stream_conv(&s, &kernels::box2(CropSide::TopLeft), 0)?;
    let boxed = FixedPlane {
        frac: x.frac + 2,
        data: boxed.into_image(),
    };
    let hp = x.shift_frac(2).zip(&boxed, |a, b| a - b);
    let (g, mut r2) = stream_conv(&PixelStream::from_image(&hp.data), &kernels::gaussian5(), 0)?;
    r1.name = format!("{tag}/denoise_box");
    r2.name = format!("{tag}/denoise_gauss");
    Ok((
        FixedPlane {
            frac: hp.frac + 8,
            data: g.into_image(),
        },
        vec![r1, r2],
    ))
}

/// `(I_ave, I_delta)` as exact fixed-point planes.
pub fn preprocess_fixed(i1: &Image<u8>, i2: &Image<u8>, h: &Homography, denoise_on: bool) -> Result<(FixedPlane, FixedPlane)> {
    let (sum, diff) = sum_diff(i1, i2, h)?;
    if denoise_on {
        Ok((denoise(&sum)?.halve(), denoise(&diff)?.halve()))
    } else {
        Ok((sum.halve(), diff.halve()))
    }
}

/// Same as [`preprocess_fixed`] through stream nodes.
pub fn preprocess_streaming(
    i1: &Image<u8>,
    i2: &Image<u8>,
    h: &Homography,
    denoise_on: bool,
) -> Result<(FixedPlane, FixedPlane, Vec<NodeReport>)> {
    let (sum, diff) = sum_diff(i1, i2, h)?;
    if denoise_on {
        let (s, mut r) = denoise_streaming(&sum, "pre/ave")?;
        let (d, r2) = denoise_streaming(&diff, "pre/delta")?;
        r.extend(r2);
        Ok((s.halve(), d.halve(), r))
    } else {
        Ok((sum.halve(), diff.halve(), Vec::new()))
    }
}

fn sum_diff(i1: &Image<u8>, i2: &Image<u8>, h: &Homography) -> Result<(FixedPlane, FixedPlane)> {
    i1.check_same_dims(i2)?;
    let a = lift(i1);
    let b = apply_homography(i2, h)?;
    Ok((a.zip(&b, |p, q| p + q), a.zip(&b, |p, q| p - q)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_u8(w: usize, h: usize, seed: u64) -> Image<u8> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| rng.random())
    }

    #[test]
    fn identity_homography() {
        let img = random_u8(12, 10, 1);
        let out = apply_homography(&img, &Homography::identity()).unwrap();
        assert_eq!(out.to_f64(), img.map(|v| v as f64));
    }

    #[test]
    fn integer_translation() {
        let img = random_u8(12, 10, 2);
        let h = Homography::from_f64([1.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        let out = apply_homography(&img, &h).unwrap().to_f64();
        for y in 0..10 {
            for x in 0..11 {
                assert_eq!(out.get(x, y), img.get(x + 1, y) as f64);
            }
        }
    }

    #[test]
    fn half_pixel_ramp() {
        let img = Image::from_fn(16, 4, |x, _| (x * 10) as u8);
        let h = Homography::from_f64([1.0, 0.0, 0.5, 0.0, 1.0, 0.0]);
        let out = apply_homography(&img, &h).unwrap().to_f64();
        for x in 0..15 {
            assert_eq!(out.get(x, 2), x as f64 * 10.0 + 5.0);
        }
    }

    #[test]
    fn budget_enforced() {
        let img = random_u8(16, 32, 3);
        let h = Homography::from_f64([1.0, 0.0, 0.0, 0.0, 1.0, 12.0]);
        assert!(matches!(apply_homography(&img, &h), Err(Error::HomographyExceedsBuffer { .. })));
    }

    #[test]
    fn trivial_pairs() {
        let img = random_u8(16, 16, 4);
        let h = Homography::identity();
        let (_, d) = preprocess_fixed(&img, &img, &h, false).unwrap();
        assert!(d.data.data.iter().all(|v| v.0 == 0));
        let two_c = Image::new(16, 16, 100u8);
        let zero = Image::new(16, 16, 0u8);
        let (a, _) = preprocess_fixed(&two_c, &zero, &h, false).unwrap();
        assert!(a.to_f64().data.iter().all(|&v| v == 50.0));
    }

    #[test]
    fn streaming_matches_dense() {
        for denoise_on in [false, true] {
            let (i1, i2) = (random_u8(16, 16, 5), random_u8(16, 16, 6));
            let h = Homography::from_f64([1.0, 0.01, 0.3, -0.02, 1.0, 0.7]);
            let (a, d) = preprocess_fixed(&i1, &i2, &h, denoise_on).unwrap();
            let (sa, sd, _) = preprocess_streaming(&i1, &i2, &h, denoise_on).unwrap();
            assert_eq!(a, sa);
            assert_eq!(d, sd);
        }
    }
}
