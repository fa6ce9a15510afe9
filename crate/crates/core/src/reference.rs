//! Dense whole-frame implementation of the depth algorithm.
//!
//! Every scale is computed at its own decimated resolution with ordinary
//! convolutions. The per-pixel arithmetic order matches the streaming
//! engine, so in [`Half`](crate::numerics::Half) mode the two agree bit for
//! bit. Work is split into [`precompute`], which depends only on the image
//! pair, and [`combine`], which applies the calibration parameters; the
//! calibrator calls `combine` many times per pair.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::kernels::{self, conv2_border, conv2_dense, Border, CropSide};
use crate::pipeline::params::CalibrationParams;
use crate::pipeline::preprocess::{preprocess_fixed, Homography};
use crate::pipeline::{check_frame, cross_terms, zone_map, ScalarParams, N_ZONES};
use crate::scalar::Sample;

/// Inputs to the per-pixel stage for one scale, at that scale's resolution.
#[derive(Clone, Debug)]
pub struct ScaleFeatures<T> {
    /// Derivative-filtered Laplacian, one image per estimate.
    pub lap: Vec<Image<T>>,
    /// Derivative-filtered difference image, one image per estimate.
    pub delta: Vec<Image<T>>,
    /// Zone of each pixel, looked up at its full-resolution position.
    pub zones: Vec<u8>,
}

#[derive(Clone, Debug)]
pub struct Features<T> {
    pub width: usize,
    pub height: usize,
    pub scales: Vec<ScaleFeatures<T>>,
    /// Full-resolution zone map.
    pub zones: Vec<u8>,
}

/// Box filter and keep even rows and columns.
pub fn decimate_dense<T: Sample>(img: &Image<T>) -> Result<Image<T>> {
    if !img.width.is_multiple_of(2) || !img.height.is_multiple_of(2) {
        return Err(Error::OddDims {
            width: img.width,
            height: img.height,
        });
    }
    let b = conv2_dense(img, &kernels::box2(CropSide::TopLeft))?;
    Ok(Image::from_fn(img.width / 2, img.height / 2, |x, y| b.get(2 * x, 2 * y)))
}

/// Zero insertion to twice the size, then the `(1 3 3 1)/4` upsampler.
pub fn upsample_dense<T: Sample>(img: &Image<T>) -> Result<Image<T>> {
    let spread = Image::from_fn(img.width * 2, img.height * 2, |x, y| {
        if x % 2 == 0 && y % 2 == 0 {
            img.get(x / 2, y / 2)
        } else {
            T::zero()
        }
    });
    conv2_border(&spread, &kernels::upsampler_shifted4(CropSide::BottomRight), 0, Border::ZeroInserted)
}

fn sub<T: Sample>(a: &Image<T>, b: &Image<T>) -> Image<T> {
    a.zip_map(b, |x, y| x - y).expect("same dims")
}

fn add<T: Sample>(a: &Image<T>, b: &Image<T>) -> Image<T> {
    a.zip_map(b, |x, y| x + y).expect("same dims")
}

/// Everything that does not depend on `a`, `b`, `omega` or thresholds.
pub fn precompute<T: Sample>(i1: &Image<u8>, i2: &Image<u8>, params: &CalibrationParams) -> Result<Features<T>> {
    params.validate()?;
    i1.check_same_dims(i2)?;
    let (width, height) = (i1.width, i1.height);
    check_frame(width, height, params)?;
    let h = Homography::from_f64(params.homography);
    let (a_fx, d_fx) = preprocess_fixed(i1, i2, &h, params.denoise)?;
    let mut ave = a_fx.to_samples::<T>();
    let mut delta = d_fx.to_samples::<T>();
    let zones = zone_map(width, height, params);
    let g = kernels::gaussian5();
    let mut scales = Vec::new();
    for n in 0..params.n_scales {
        let g_ave = conv2_dense(&ave, &g)?;
        let g_delta = conv2_dense(&delta, &g)?;
        let next_ave = decimate_dense(&g_ave)?;
        let next_delta = decimate_dense(&g_delta)?;
        let lap = sub(&ave, &upsample_dense(&next_ave)?);
        let (laps, deltas) = if params.derivatives_enabled {
            let (p, dx, dy) = kernels::deriv_kernels();
            let mut l = Vec::new();
            let mut d = Vec::new();
            for k in [&p, &dx, &dy] {
                l.push(conv2_dense(&lap, k)?);
                d.push(conv2_dense(&delta, k)?);
            }
            (l, d)
        } else {
            (vec![lap], vec![delta.clone()])
        };
        let sz = Image::from_fn(ave.width, ave.height, |x, y| zones[(y << n) * width + (x << n)]);
        scales.push(ScaleFeatures {
            lap: laps,
            delta: deltas,
            zones: sz.data,
        });
        ave = next_ave;
        delta = next_delta;
    }
    Ok(Features {
        width,
        height,
        scales,
        zones,
    })
}

/// Which per-estimate quantity is summed into the confidence map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ConfidenceMetric {
    /// `sum w V W`, the depth numerator.
    VW,
    /// `sum w W^2`, the depth denominator.
    W2,
    /// `sum w |W|`.
    AbsW,
}

impl ConfidenceMetric {
    pub const ALL: [ConfidenceMetric; 3] = [ConfidenceMetric::VW, ConfidenceMetric::W2, ConfidenceMetric::AbsW];

    pub fn name(self) -> &'static str {
        match self {
            ConfidenceMetric::VW => "VW",
            ConfidenceMetric::W2 => "W2",
            ConfidenceMetric::AbsW => "absW",
        }
    }
}

/// Full-resolution result of [`combine`].
#[derive(Clone, Debug)]
pub struct Combined<T> {
    /// `sum VW`: the depth numerator and default confidence.
    pub c: Image<T>,
    /// `sum WW`.
    pub s: Image<T>,
    pub z: Image<T>,
}

fn upsample_times<T: Sample>(img: Image<T>, n: usize) -> Image<T> {
    (0..n).fold(img, |acc, _| upsample_dense(&acc).expect("upsample"))
}

/// Applies parameters to precomputed features.
pub fn combine<T: Sample>(f: &Features<T>, params: &CalibrationParams) -> Combined<T> {
    let sp = ScalarParams::<T>::new(params);
    let n_est = params.estimates_per_scale();
    let mut c: Option<Image<T>> = None;
    let mut s: Option<Image<T>> = None;
    for (n, sf) in f.scales.iter().enumerate() {
        let (w, h) = (sf.lap[0].width, sf.lap[0].height);
        let omega = &sp.omega[3 * n..3 * n + n_est];
        let mut vw = Vec::with_capacity(w * h);
        let mut ww = Vec::with_capacity(w * h);
        let mut l = vec![T::zero(); n_est];
        let mut d = vec![T::zero(); n_est];
        for i in 0..w * h {
            for k in 0..n_est {
                l[k] = sf.lap[k].data[i];
                d[k] = sf.delta[k].data[i];
            }
            let z = sf.zones[i] as usize;
            let (p, q) = cross_terms(&l, &d, sp.a[n][z], sp.b[n][z], omega);
            vw.push(p);
            ww.push(q);
        }
        let vw = upsample_times(Image { width: w, height: h, data: vw }, n);
        let ww = upsample_times(Image { width: w, height: h, data: ww }, n);
        c = Some(match c {
            None => vw,
            Some(acc) => add(&acc, &vw),
        });
        s = Some(match s {
            None => ww,
            Some(acc) => add(&acc, &ww),
        });
    }
    let (c, s) = (c.expect("one scale"), s.expect("one scale"));
    let z = c.zip_map(&s, |num, den| num / den).expect("same dims");
    Combined { c, s, z }
}

/// `(Z, confidence)` in f64 under an alternative confidence metric.
pub fn combine_with_metric(f: &Features<f64>, params: &CalibrationParams, metric: ConfidenceMetric) -> (Image<f64>, Image<f64>) {
    let out = combine(f, params);
    let conf = match metric {
        ConfidenceMetric::VW => out.c,
        ConfidenceMetric::W2 => out.s,
        ConfidenceMetric::AbsW => abs_w_confidence(f, params),
    };
    (out.z, conf)
}

fn abs_w_confidence(f: &Features<f64>, params: &CalibrationParams) -> Image<f64> {
    let n_est = params.estimates_per_scale();
    let mut total: Option<Image<f64>> = None;
    for (n, sf) in f.scales.iter().enumerate() {
        let (w, h) = (sf.lap[0].width, sf.lap[0].height);
        let data = (0..w * h)
            .map(|i| {
                let zp = &params.zones[sf.zones[i] as usize];
                (0..n_est)
                    .map(|k| {
                        let v = zp.a[n] * sf.lap[k].data[i];
                        let wv = zp.b[n] * v - sf.delta[k].data[i];
                        params.omega_for(n, k) * wv.abs()
                    })
                    .sum()
            })
            .collect();
        let up = upsample_times(Image { width: w, height: h, data }, n);
        total = Some(match total {
            None => up,
            Some(t) => add(&t, &up),
        });
    }
    total.expect("one scale")
}

/// Dense counterpart of the streaming pipeline: `(Z_raw, C)`.
pub fn reference_pipeline<T: Sample>(i1: &Image<u8>, i2: &Image<u8>, params: &CalibrationParams) -> Result<(Image<T>, Image<T>)> {
    let f = precompute::<T>(i1, i2, params)?;
    let out = combine(&f, params);
    Ok((out.z, out.c))
}

/// A calibration example: features of one pair with its true depth map.
#[derive(Clone, Debug)]
pub struct Labeled {
    pub features: Features<f64>,
    pub truth: Image<f64>,
}

/// Settings of the confidence-masked loss.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossConfig {
    /// Fraction of each zone's pixels, most confident first, entering the loss.
    pub top_fraction: f64,
    /// Pixels this close to the frame edge are ignored.
    pub border: usize,
    pub metric: ConfidenceMetric,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            top_fraction: 0.1,
            border: 8,
            metric: ConfidenceMetric::VW,
        }
    }
}

/// Loss value and bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub selected: usize,
    /// `(image index, zone)` pairs with no usable pixel.
    pub skipped_zones: Vec<(usize, usize)>,
}

/// Indices of the `ceil(fraction * n)` most confident usable pixels of each
/// zone. Usable means inside the border with finite depth and confidence.
pub fn select_confident(
    z: &Image<f64>,
    conf: &Image<f64>,
    zones: &[u8],
    cfg: &LossConfig,
) -> Vec<Vec<usize>> {
    let (w, h) = (z.width, z.height);
    let mut per_zone: Vec<Vec<usize>> = vec![Vec::new(); N_ZONES];
    let b = cfg.border;
    for y in b..h.saturating_sub(b) {
        for x in b..w.saturating_sub(b) {
            let i = y * w + x;
            if z.data[i].is_finite() && conf.data[i].is_finite() {
                per_zone[zones[i] as usize].push(i);
            }
        }
    }
    for idx in &mut per_zone {
        let keep = (cfg.top_fraction * idx.len() as f64).ceil() as usize;
        if keep < idx.len() && keep > 0 {
            idx.select_nth_unstable_by(keep - 1, |&p, &q| conf.data[q].total_cmp(&conf.data[p]));
        }
        idx.truncate(keep);
    }
    per_zone
}

/// Pooled MAE over the confident pixels of every zone of every example.
pub fn masked_mae(items: &[Labeled], params: &CalibrationParams, cfg: &LossConfig) -> LossReport {
    let mut err = 0.0;
    let mut count = 0;
    let mut skipped = Vec::new();
    for (k, item) in items.iter().enumerate() {
        let (z, conf) = combine_with_metric(&item.features, params, cfg.metric);
        let sel = select_confident(&z, &conf, &item.features.zones, cfg);
        for (zone, idx) in sel.iter().enumerate() {
            if idx.is_empty() {
                skipped.push((k, zone));
            }
            for &i in idx {
                err += (z.data[i] - item.truth.data[i]).abs();
                count += 1;
            }
        }
    }
    LossReport {
        loss: if count == 0 { f64::NAN } else { err / count as f64 },
        selected: count,
        skipped_zones: skipped,
    }
}

/// Which scalar of [`CalibrationParams`] a free parameter refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamRef {
    A { zone: usize, scale: usize },
    B { zone: usize, scale: usize },
    Omega(usize),
}

impl ParamRef {
    pub fn get(self, p: &CalibrationParams) -> f64 {
        match self {
            ParamRef::A { zone, scale } => p.zones[zone].a[scale],
            ParamRef::B { zone, scale } => p.zones[zone].b[scale],
            ParamRef::Omega(i) => p.omega[i],
        }
    }

    pub fn set(self, p: &mut CalibrationParams, v: f64) {
        match self {
            ParamRef::A { zone, scale } => p.zones[zone].a[scale] = v,
            ParamRef::B { zone, scale } => p.zones[zone].b[scale] = v,
            ParamRef::Omega(i) => p.omega[i] = v,
        }
    }
}

/// The free parameters the calibrator optimizes: `a` and `b` per zone per
/// scale, plus the weights of the enabled estimates.
pub fn free_params(p: &CalibrationParams) -> Vec<ParamRef> {
    let mut out = Vec::new();
    for zone in 0..p.zones.len() {
        for scale in 0..p.n_scales {
            out.push(ParamRef::A { zone, scale });
            out.push(ParamRef::B { zone, scale });
        }
    }
    for n in 0..p.n_scales {
        for d in 0..p.estimates_per_scale() {
            out.push(ParamRef::Omega(3 * n + d));
        }
    }
    out
}

/// Loss and its central finite-difference gradient over `refs`, each step
/// being `rel_step` times the parameter magnitude.
pub fn loss_and_gradient(
    items: &[Labeled],
    params: &CalibrationParams,
    refs: &[ParamRef],
    cfg: &LossConfig,
    rel_step: f64,
) -> (f64, Vec<f64>) {
    let loss = masked_mae(items, params, cfg).loss;
    let mut p = params.clone();
    let grad = refs
        .iter()
        .map(|&r| {
            let v = r.get(params);
            let h = rel_step * v.abs().max(1e-6);
            r.set(&mut p, v + h);
            let up = masked_mae(items, &p, cfg).loss;
            r.set(&mut p, v - h);
            let down = masked_mae(items, &p, cfg).loss;
            r.set(&mut p, v);
            (up - down) / (2.0 * h)
        })
        .collect();
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Half;
    use crate::pipeline::run_streaming;

    fn textured(w: usize, h: usize, seed: usize) -> Image<u8> {
        Image::from_fn(w, h, |x, y| ((x * 37 + y * 91 + (x * y + seed) % 17 + seed * 5) % 256) as u8)
    }

    #[test]
    fn flat_scene_zero_confidence() {
        let flat = Image::new(32, 32, 77u8);
        let p = CalibrationParams::uniform(32, 32, 2, true, -1.0, 1.0);
        let (_, c) = reference_pipeline::<f64>(&flat, &flat, &p).unwrap();
        assert!(c.data.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_estimate_is_eq1() {
        let (i1, i2) = (textured(32, 32, 1), textured(32, 32, 2));
        let mut p = CalibrationParams::uniform(32, 32, 1, false, -0.7, 1.3);
        p.omega = vec![0.4, 0.0, 0.0, 0.0, 0.0, 0.0];
        let f = precompute::<f64>(&i1, &i2, &p).unwrap();
        let out = combine(&f, &p);
        for i in 0..32 * 32 {
            let v = -0.7 * f.scales[0].lap[0].data[i];
            let w = 1.3 * v - f.scales[0].delta[0].data[i];
            if w.abs() > 1e-3 {
                assert!((out.z.data[i] - v / w).abs() <= 1e-9 * (v / w).abs().max(1.0));
            }
        }
    }

    #[test]
    fn half_mode_matches_streaming() {
        for (n, d) in [(1, false), (1, true), (2, false), (2, true)] {
            let (i1, i2) = (textured(32, 24, 3), textured(32, 24, 4));
            let p = CalibrationParams::uniform(32, 24, n, d, -0.02, 1.4);
            let (z, c) = reference_pipeline::<Half>(&i1, &i2, &p).unwrap();
            let run = run_streaming::<Half>(&i1, &i2, &p).unwrap();
            let bits = |im: &Image<Half>| im.data.iter().map(|h| h.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&z), bits(&run.z_raw), "Z, N={n} d={d}");
            assert_eq!(bits(&c), bits(&run.confidence), "C, N={n} d={d}");
        }
    }

    #[test]
    fn omega_scale_invariance() {
        let (i1, i2) = (textured(32, 32, 5), textured(32, 32, 6));
        let mut p = CalibrationParams::uniform(32, 32, 2, true, -0.05, 1.2);
        p.omega = vec![0.1, 0.2, 0.3, 0.15, 0.05, 0.2];
        let f = precompute::<f64>(&i1, &i2, &p).unwrap();
        let z1 = combine(&f, &p).z;
        for w in &mut p.omega {
            *w *= 4.0;
        }
        let z2 = combine(&f, &p).z;
        // a power-of-two scale is exact
        assert_eq!(z1, z2);
    }

    #[test]
    fn selection_count() {
        let z = Image::from_fn(40, 40, |x, _| x as f64);
        let conf = Image::from_fn(40, 40, |x, y| (x * 40 + y) as f64);
        let zones = vec![0u8; 1600];
        let cfg = LossConfig {
            border: 0,
            ..LossConfig::default()
        };
        let sel = select_confident(&z, &conf, &zones, &cfg);
        assert_eq!(sel[0].len(), 160);
        assert!(sel[0].iter().all(|&i| i % 40 >= 36));
        assert!(sel[1].is_empty());
    }
}
