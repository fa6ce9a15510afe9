//! The depth algorithm: preprocessing, per-scale `(V, W)` channels, cross
//! products, cross-scale sums, one division per pixel and radial-zone
//! masking.

pub mod depth;
pub mod params;
pub mod preprocess;
pub mod stream;
pub mod zones;

use std::str::FromStr;

pub use self::depth::{mask, DepthMap};
pub use self::params::{CalibrationParams, Zone, N_OMEGA, N_ZONES};
pub use self::preprocess::{apply_homography, preprocess_fixed, FixedPlane, Homography};
pub use self::stream::{run_streaming, StreamRun};
pub use self::zones::{zone_map, ZoneCounter};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::numerics::Half;
use crate::scalar::Sample;

/// Which implementation computes the frame.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    Streaming,
    Reference,
}

/// Working scalar after preprocessing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Numerics {
    Half,
    Wide,
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "streaming" => Ok(Engine::Streaming),
            "reference" => Ok(Engine::Reference),
            _ => Err(Error::UnknownOp(format!("engine {s}"))),
        }
    }
}

impl FromStr for Numerics {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "half" => Ok(Numerics::Half),
            "wide" => Ok(Numerics::Wide),
            _ => Err(Error::UnknownOp(format!("numerics {s}"))),
        }
    }
}

/// Calibration values converted once into the working scalar.
pub struct ScalarParams<T> {
    /// `[scale][zone]`
    pub a: Vec<Vec<T>>,
    pub b: Vec<Vec<T>>,
    pub omega: Vec<T>,
}

impl<T: Sample> ScalarParams<T> {
    pub fn new(p: &CalibrationParams) -> Self {
        let per_scale = |f: fn(&Zone) -> &Vec<f64>| {
            (0..p.n_scales)
                .map(|n| p.zones.iter().map(|z| T::from_f64(f(z)[n])).collect())
                .collect()
        };
        ScalarParams {
            a: per_scale(|z| &z.a),
            b: per_scale(|z| &z.b),
            omega: p.omega.iter().map(|&w| T::from_f64(w)).collect(),
        }
    }
}

/// Per-pixel `(VW, WW)` for one scale. `lap[d]` and `delta[d]` hold the
/// derivative-filtered Laplacian and difference image samples, `omega` the
/// matching weights. Both engines go through this function so their
/// rounding sequence is identical.
#[inline]
pub fn cross_terms<T: Sample>(lap: &[T], delta: &[T], a: T, b: T, omega: &[T]) -> (T, T) {
    let mut vw: Option<T> = None;
    let mut ww: Option<T> = None;
    for k in 0..lap.len() {
        let v = a * lap[k];
        let w = b * v - delta[k];
        let tv = omega[k] * v * w;
        let tw = omega[k] * w * w;
        vw = Some(vw.map_or(tv, |s| s + tv));
        ww = Some(ww.map_or(tw, |s| s + tw));
    }
    (vw.expect("at least one estimate"), ww.expect("at least one estimate"))
}

/// Checks frame size against the scale count.
pub fn check_frame(width: usize, height: usize, params: &CalibrationParams) -> Result<()> {
    let div = 1usize << params.n_scales;
    if !width.is_multiple_of(div) || !height.is_multiple_of(div) {
        return Err(Error::NotDivisible {
            width,
            height,
            divisor: div,
        });
    }
    let coarsest = 1usize << (params.n_scales - 1);
    if width / coarsest < 5 || height / coarsest < 5 {
        return Err(Error::ImageTooSmall {
            width,
            height,
            kh: 5 * coarsest,
            kw: 5 * coarsest,
        });
    }
    params.check_covers(width, height)
}

/// Widens a scalar image for masking and output.
pub fn widen<T: Sample>(img: &Image<T>) -> Image<f64> {
    img.map(|v| v.to_f64())
}

/// Full composition with a chosen engine and precision.
pub fn run_pipeline(
    i1: &Image<u8>,
    i2: &Image<u8>,
    params: &CalibrationParams,
    engine: Engine,
    numerics: Numerics,
) -> Result<DepthMap> {
    fn go<T: Sample>(i1: &Image<u8>, i2: &Image<u8>, p: &CalibrationParams, engine: Engine) -> Result<DepthMap> {
        let (z, c) = match engine {
            Engine::Streaming => {
                let run = run_streaming::<T>(i1, i2, p)?;
                (run.z_raw, run.confidence)
            }
            Engine::Reference => crate::reference::reference_pipeline::<T>(i1, i2, p)?,
        };
        Ok(mask(&widen(&z), &widen(&c), p))
    }
    match numerics {
        Numerics::Half => go::<Half>(i1, i2, params, engine),
        Numerics::Wide => go::<f64>(i1, i2, params, engine),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_terms_single_estimate_is_v_over_w() {
        let (vw, ww) = cross_terms(&[2.0], &[-2.0], 1.0, 1.0, &[0.3]);
        // V = 2, W = 1*2 + 2 = 4
        assert!((vw / ww - 0.5f64).abs() < 1e-15);
    }

    #[test]
    fn cross_terms_two_estimates() {
        // (V, W) = (1, 1) and (0, 1)
        let (vw, ww) = cross_terms(&[1.0, 0.0], &[0.0, -1.0], 1.0, 1.0, &[1.0, 1.0]);
        assert_eq!(vw / ww, 0.5);
    }
}
