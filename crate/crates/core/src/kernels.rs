//! Convolution kernels and their dense (whole-frame) application.
//!
//! Taps are exact rationals with power-of-two denominators. Application is
//! correlation (`out[o] = sum_k tap[k] * in[o + k - anchor]`), which equals
//! convolution for the symmetric kernels and gives `dx` of a ramp `f = x`
//! the value +1. Borders are replicate-edge.
//!
//! Even-sized kernels need a crop side. For a base length `K`:
//! `br` puts `K/2` taps before the anchor (the output only looks up and to
//! the left of the anchor), `tl` puts `K/2 - 1` before it.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scalar::Sample;

pub type Coef = Ratio<i64>;

fn q(n: i64, d: i64) -> Coef {
    Ratio::new(n, d)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CropSide {
    TopLeft,
    BottomRight,
    Centered,
}

impl CropSide {
    fn anchor(self, len: usize) -> usize {
        match self {
            _ if len % 2 == 1 => (len - 1) / 2,
            CropSide::BottomRight => len / 2,
            CropSide::TopLeft => len / 2 - 1,
            CropSide::Centered => panic!("even kernel of length {len} needs a crop side"),
        }
    }
}

/// A 2-D kernel. `col` is the vertical factor, `row` the horizontal one.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub name: String,
    pub taps: Vec<Vec<Coef>>,
    /// (row, col) of the output position inside the footprint.
    pub anchor: (usize, usize),
    pub crop: CropSide,
    pub separable: Option<(Vec<Coef>, Vec<Coef>)>,
    /// Zero-interleave level: nonzero taps sit at multiples of `2^scale`.
    pub scale: u32,
}

fn outer(col: &[Coef], row: &[Coef]) -> Vec<Vec<Coef>> {
    col.iter()
        .map(|c| row.iter().map(|r| c * r).collect())
        .collect()
}

impl Kernel {
    pub fn separable(name: &str, col: Vec<Coef>, row: Vec<Coef>, crop: CropSide) -> Kernel {
        Kernel {
            name: name.to_string(),
            taps: outer(&col, &row),
            anchor: (crop.anchor(col.len()), crop.anchor(row.len())),
            crop,
            separable: Some((col, row)),
            scale: 0,
        }
    }

    /// Footprint as (height, width).
    pub fn footprint(&self) -> (usize, usize) {
        (self.taps.len(), self.taps[0].len())
    }

    /// Height of the kernel before zero interleaving.
    pub fn base_height(&self) -> usize {
        (self.footprint().0 - 1) / (1 << self.scale) + 1
    }

    pub fn tap_sum(&self) -> Coef {
        self.taps.iter().flatten().fold(Coef::zero(), |a, b| a + b)
    }

    /// True when every tap denominator (in lowest terms) is a power of two.
    pub fn has_power_of_two_denominators(&self) -> bool {
        self.taps
            .iter()
            .flatten()
            .all(|t| (*t.denom() as u64).is_power_of_two())
    }

    /// Nonzero taps of the vertical factor as (offset from anchor, tap).
    pub fn col_taps(&self) -> Vec<(isize, Coef)> {
        let (col, _) = self.separable.as_ref().expect("separable kernel");
        nonzero_offsets(col, self.anchor.0)
    }

    pub fn row_taps(&self) -> Vec<(isize, Coef)> {
        let (_, row) = self.separable.as_ref().expect("separable kernel");
        nonzero_offsets(row, self.anchor.1)
    }

    /// Largest denominator among the vertical / horizontal factor taps.
    pub fn factor_denominators(&self) -> (i64, i64) {
        let (col, row) = self.separable.as_ref().expect("separable kernel");
        let den = |v: &[Coef]| v.iter().map(|t| *t.denom()).max().unwrap_or(1);
        (den(col), den(row))
    }
}

fn nonzero_offsets(taps: &[Coef], anchor: usize) -> Vec<(isize, Coef)> {
    taps.iter()
        .enumerate()
        .filter(|(_, t)| !t.is_zero())
        .map(|(i, t)| (i as isize - anchor as isize, *t))
        .collect()
}

/// 5x5 Burt-Adelson Gaussian, (1 4 6 4 1)/16 per axis.
pub fn gaussian5() -> Kernel {
    let f: Vec<Coef> = [1, 4, 6, 4, 1].iter().map(|&n| q(n, 16)).collect();
    Kernel::separable("gaussian5", f.clone(), f, CropSide::Centered)
}

/// 2x2 box, the downsampler filter.
pub fn box2(crop: CropSide) -> Kernel {
    let f = vec![q(1, 2), q(1, 2)];
    Kernel::separable("box2", f.clone(), f, crop)
}

/// 3x3 bilinear interpolation kernel, (1/2 1 1/2) per axis.
pub fn upsampler_bilinear3() -> Kernel {
    let f = vec![q(1, 2), q(1, 1), q(1, 2)];
    Kernel::separable("bilinear3", f.clone(), f, CropSide::Centered)
}

/// Bilinear upsampler fused with the half-pixel correcting box,
/// (1 3 3 1)/4 per axis.
pub fn upsampler_shifted4(crop: CropSide) -> Kernel {
    let f: Vec<Coef> = [1, 3, 3, 1].iter().map(|&n| q(n, 4)).collect();
    Kernel::separable("upsampler4", f.clone(), f, crop)
}

/// The 3x3 pass-through and smoothed central-difference kernels.
pub fn deriv_kernels() -> (Kernel, Kernel, Kernel) {
    let delta = vec![q(0, 1), q(1, 1), q(0, 1)];
    let smooth = vec![q(1, 4), q(1, 2), q(1, 4)];
    let diff = vec![q(-1, 2), q(0, 1), q(1, 2)];
    (
        Kernel::separable("pass", delta.clone(), delta, CropSide::Centered),
        Kernel::separable("dx", smooth.clone(), diff.clone(), CropSide::Centered),
        Kernel::separable("dy", diff, smooth, CropSide::Centered),
    )
}

fn interleave_1d(f: &[Coef], stride: usize) -> Vec<Coef> {
    let mut out = vec![Coef::zero(); (f.len() - 1) * stride + 1];
    for (i, t) in f.iter().enumerate() {
        out[i * stride] = *t;
    }
    out
}

/// Spreads the taps of `base` `2^scale` apart with zeros in between.
pub fn interleave(base: &Kernel, scale: u32) -> Kernel {
    let stride = 1usize << scale;
    let spread_rows = |rows: &Vec<Vec<Coef>>| -> Vec<Vec<Coef>> {
        let w = (rows[0].len() - 1) * stride + 1;
        let mut out = vec![vec![Coef::zero(); w]; (rows.len() - 1) * stride + 1];
        for (i, r) in rows.iter().enumerate() {
            out[i * stride] = interleave_1d(r, stride);
        }
        out
    };
    Kernel {
        name: base.name.clone(),
        taps: spread_rows(&base.taps),
        anchor: (base.anchor.0 * stride, base.anchor.1 * stride),
        crop: base.crop,
        separable: base
            .separable
            .as_ref()
            .map(|(c, r)| (interleave_1d(c, stride), interleave_1d(r, stride))),
        scale: base.scale + scale,
    }
}

/// Full 2-D convolution of two tap arrays (output size `ha+hb-1` x `wa+wb-1`).
pub fn convolve_taps(a: &[Vec<Coef>], b: &[Vec<Coef>]) -> Vec<Vec<Coef>> {
    let (ha, wa, hb, wb) = (a.len(), a[0].len(), b.len(), b[0].len());
    let mut out = vec![vec![Coef::zero(); wa + wb - 1]; ha + hb - 1];
    for (i, ra) in a.iter().enumerate() {
        for (j, ta) in ra.iter().enumerate() {
            for (k, rb) in b.iter().enumerate() {
                for (l, tb) in rb.iter().enumerate() {
                    out[i + k][j + l] += ta * tb;
                }
            }
        }
    }
    out
}

/// Arithmetic used to apply kernel taps to samples.
///
/// `Coef` is the tap as the sample domain sees it: a rounded value for
/// floating types, the integer numerator over the factor's denominator for
/// raw fixed-point words, the exact rational for rationals.
pub trait TapArith: Copy {
    type Coef: Copy;
    fn coef(tap: Coef, denom: i64) -> Self::Coef;
    fn scaled(c: Self::Coef, x: Self) -> Self;
    fn add(a: Self, b: Self) -> Self;
}

impl<T: Sample> TapArith for T {
    type Coef = T;
    fn coef(tap: Coef, _denom: i64) -> T {
        T::from_f64(tap.to_f64().expect("finite tap"))
    }
    #[inline]
    fn scaled(c: T, x: T) -> T {
        c * x
    }
    #[inline]
    fn add(a: T, b: T) -> T {
        a + b
    }
}

impl TapArith for Coef {
    type Coef = Coef;
    fn coef(tap: Coef, _denom: i64) -> Coef {
        tap
    }
    fn scaled(c: Coef, x: Coef) -> Coef {
        c * x
    }
    fn add(a: Coef, b: Coef) -> Coef {
        a + b
    }
}

/// A raw fixed-point word. Taps are applied as integer numerators, so each
/// separable pass adds `log2(denominator)` fractional bits and nothing is
/// ever trimmed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct FixedWord(pub i64);

impl TapArith for FixedWord {
    type Coef = i64;
    fn coef(tap: Coef, denom: i64) -> i64 {
        let n = tap * Coef::from_integer(denom);
        assert!(n.is_integer(), "tap {tap} not a multiple of 1/{denom}");
        n.to_integer()
    }
    #[inline]
    fn scaled(c: i64, x: FixedWord) -> FixedWord {
        FixedWord(c * x.0)
    }
    #[inline]
    fn add(a: FixedWord, b: FixedWord) -> FixedWord {
        FixedWord(a.0 + b.0)
    }
}

/// Clamps a coordinate into `[0, last]`, `last` being the final position of
/// the `2^lattice` sampling grid inside `dim`.
#[inline]
pub fn clamp_to_lattice(c: isize, dim: usize, lattice: u32) -> usize {
    let last = (((dim - 1) >> lattice) << lattice) as isize;
    c.clamp(0, last) as usize
}

/// Edge policy of a convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Border {
    /// Replicate the nearest sample of the `2^lattice` grid.
    Replicate,
    /// The input is zero-inserted: only multiples of `2^(lattice+1)` carry
    /// data. Out-of-frame reads replicate on that coarse grid and read zero
    /// elsewhere, which is the same as padding before zero insertion.
    ZeroInserted,
}

/// Source index for a read at `c`, or `None` for an implicit zero.
#[inline]
pub fn border_index(c: isize, dim: usize, lattice: u32, border: Border) -> Option<usize> {
    match border {
        Border::Replicate => Some(clamp_to_lattice(c, dim, lattice)),
        Border::ZeroInserted => {
            if c >= 0 && (c as usize) < dim {
                Some(c as usize)
            } else if c.rem_euclid(1 << (lattice + 1)) == 0 {
                Some(clamp_to_lattice(c, dim, lattice + 1))
            } else {
                None
            }
        }
    }
}

/// Kernel taps converted for one arithmetic domain.
pub struct PreparedKernel<A: TapArith> {
    pub col: Vec<(isize, A::Coef)>,
    pub row: Vec<(isize, A::Coef)>,
}

impl<A: TapArith> PreparedKernel<A> {
    pub fn new(k: &Kernel) -> Self {
        let (dc, dr) = k.factor_denominators();
        PreparedKernel {
            col: k.col_taps().into_iter().map(|(o, t)| (o, A::coef(t, dc))).collect(),
            row: k.row_taps().into_iter().map(|(o, t)| (o, A::coef(t, dr))).collect(),
        }
    }
}

/// Same-size replicate-edge application, vertical factor first.
pub fn conv2_dense<A: TapArith>(img: &Image<A>, k: &Kernel) -> Result<Image<A>> {
    conv2_lattice(img, k, 0)
}

/// Like [`conv2_dense`] but clamping borders to the `2^lattice` grid, for
/// zero-interleaved kernels running on a full-resolution raster.
pub fn conv2_lattice<A: TapArith>(img: &Image<A>, k: &Kernel, lattice: u32) -> Result<Image<A>> {
    conv2_border(img, k, lattice, Border::Replicate)
}

/// [`conv2_lattice`] with an explicit edge policy. Implicit zeros are
/// skipped rather than added.
pub fn conv2_border<A: TapArith>(img: &Image<A>, k: &Kernel, lattice: u32, border: Border) -> Result<Image<A>> {
    let (kh, kw) = k.footprint();
    if img.height < kh || img.width < kw {
        return Err(Error::ImageTooSmall {
            width: img.width,
            height: img.height,
            kh,
            kw,
        });
    }
    if k.separable.is_none() {
        assert_eq!(border, Border::Replicate, "direct path supports replicate only");
        return Ok(conv2_direct(img, k, lattice));
    }
    let pk = PreparedKernel::<A>::new(k);
    let (w, h) = (img.width, img.height);
    Ok(Image::from_fn(w, h, |x, y| {
        let column = |cx: usize| {
            let mut acc: Option<A> = None;
            for &(dy, c) in &pk.col {
                let Some(sy) = border_index(y as isize + dy, h, lattice, border) else {
                    continue;
                };
                let term = A::scaled(c, img.get(cx, sy));
                acc = Some(match acc {
                    None => term,
                    Some(a) => A::add(a, term),
                });
            }
            acc.expect("kernel has a nonzero tap")
        };
        let mut acc: Option<A> = None;
        for &(dx, c) in &pk.row {
            let Some(cx) = border_index(x as isize + dx, w, lattice, border) else {
                continue;
            };
            let term = A::scaled(c, column(cx));
            acc = Some(match acc {
                None => term,
                Some(a) => A::add(a, term),
            });
        }
        acc.expect("kernel has a nonzero tap")
    }))
}

fn conv2_direct<A: TapArith>(img: &Image<A>, k: &Kernel, lattice: u32) -> Image<A> {
    let (w, h) = (img.width, img.height);
    Image::from_fn(w, h, |x, y| {
        let mut acc: Option<A> = None;
        for (i, row) in k.taps.iter().enumerate() {
            for (j, t) in row.iter().enumerate() {
                if t.is_zero() {
                    continue;
                }
                let sy = clamp_to_lattice(y as isize + i as isize - k.anchor.0 as isize, h, lattice);
                let sx = clamp_to_lattice(x as isize + j as isize - k.anchor.1 as isize, w, lattice);
                let term = A::scaled(A::coef(*t, 1), img.get(sx, sy));
                acc = Some(match acc {
                    None => term,
                    Some(a) => A::add(a, term),
                });
            }
        }
        acc.expect("kernel has a nonzero tap")
    })
}

/// Applies the horizontal factor to every row, then the vertical factor to
/// every column, in exact rationals.
pub fn conv2_separable_exact(img: &Image<Coef>, k: &Kernel) -> Result<Image<Coef>> {
    let (kh, kw) = k.footprint();
    if img.height < kh || img.width < kw {
        return Err(Error::ImageTooSmall {
            width: img.width,
            height: img.height,
            kh,
            kw,
        });
    }
    let (w, h) = (img.width as isize, img.height as isize);
    let rows = k.row_taps();
    let cols = k.col_taps();
    let horiz = Image::from_fn(img.width, img.height, |x, y| {
        rows.iter().fold(Coef::zero(), |acc, &(d, t)| {
            acc + t * img.get((x as isize + d).clamp(0, w - 1) as usize, y)
        })
    });
    Ok(Image::from_fn(img.width, img.height, |x, y| {
        cols.iter().fold(Coef::zero(), |acc, &(d, t)| {
            acc + t * horiz.get(x, (y as isize + d).clamp(0, h - 1) as usize)
        })
    }))
}

/// Drops the separable factors so [`conv2_dense`] takes the direct 2-D path.
pub fn as_direct(k: &Kernel) -> Kernel {
    Kernel {
        separable: None,
        ..k.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    fn one() -> Coef {
        Coef::one()
    }

    fn ints(v: &[i64], d: i64) -> Vec<Coef> {
        v.iter().map(|&n| q(n, d)).collect()
    }

    #[test]
    fn gaussian_taps() {
        let g = gaussian5();
        assert_eq!(g.taps[2][2], q(36, 256));
        assert_eq!(g.taps[0][0], q(1, 256));
        assert_eq!(g.tap_sum(), one());
        assert!(g.has_power_of_two_denominators());
        assert_eq!(g.anchor, (2, 2));
    }

    #[test]
    fn upsampler_identity() {
        let fused = convolve_taps(&upsampler_bilinear3().taps, &box2(CropSide::BottomRight).taps);
        let up = upsampler_shifted4(CropSide::BottomRight);
        assert_eq!(fused, up.taps);
        assert_eq!(up.taps[1][1], q(9, 16));
        assert_eq!(box2(CropSide::TopLeft).tap_sum(), one());
    }

    #[test]
    fn crop_anchors() {
        assert_eq!(box2(CropSide::TopLeft).anchor, (0, 0));
        assert_eq!(box2(CropSide::BottomRight).anchor, (1, 1));
        assert_eq!(upsampler_shifted4(CropSide::BottomRight).anchor, (2, 2));
    }

    #[test]
    fn derivative_taps() {
        let (pass, dx, dy) = deriv_kernels();
        assert_eq!(dx.taps[0][2], q(1, 8));
        assert_eq!(dx.taps[1][0], q(-1, 4));
        assert_eq!(dy.taps[2][0], q(1, 8));
        assert_eq!(pass.tap_sum(), one());
        for k in [&pass, &dx, &dy] {
            assert!(k.has_power_of_two_denominators());
        }
    }

    #[test]
    fn interleave_scales() {
        let g = gaussian5();
        let (_, row1) = interleave(&g, 1).separable.unwrap();
        assert_eq!(row1, ints(&[1, 0, 4, 0, 6, 0, 4, 0, 1], 16));
        let (_, row2) = interleave(&g, 2).separable.unwrap();
        assert_eq!(row2, ints(&[1, 0, 0, 0, 4, 0, 0, 0, 6, 0, 0, 0, 4, 0, 0, 0, 1], 16));
        assert_eq!(interleave(&g, 0), g);
        assert_eq!(interleave(&interleave(&g, 1), 1), interleave(&g, 2));
        assert_eq!(interleave(&g, 2).base_height(), 5);
    }

    #[test]
    fn ramp_derivative_is_one() {
        let (pass, dx, dy) = deriv_kernels();
        let ramp = Image::from_fn(8, 6, |x, _| q(x as i64, 1));
        let out = conv2_dense(&ramp, &dx).unwrap();
        for y in 0..6 {
            for x in 1..7 {
                assert_eq!(out.get(x, y), one());
            }
        }
        assert_eq!(conv2_dense(&ramp, &pass).unwrap(), ramp);
        let vramp = Image::from_fn(6, 8, |_, y| q(3 * y as i64, 1));
        assert_eq!(conv2_dense(&vramp, &dy).unwrap().get(2, 4), q(3, 1));
    }

    #[test]
    fn constant_image_is_preserved() {
        let img = Image::new(9, 7, 5.25f64);
        let out = conv2_dense(&img, &gaussian5()).unwrap();
        assert!(out.data.iter().all(|&v| v == 5.25));
    }

    #[test]
    fn too_small_is_an_error() {
        let img = Image::new(4, 8, 0.0f64);
        assert!(matches!(
            conv2_dense(&img, &gaussian5()),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn fixed_words_carry_the_denominator() {
        let img = Image::from_fn(6, 6, |x, y| FixedWord((x * 7 + y) as i64));
        let out = conv2_dense(&img, &gaussian5()).unwrap();
        let exact = conv2_dense(&img.map(|v| q(v.0, 1)), &gaussian5()).unwrap();
        for (a, b) in out.data.iter().zip(&exact.data) {
            assert_eq!(q(a.0, 256), *b);
        }
    }
}
