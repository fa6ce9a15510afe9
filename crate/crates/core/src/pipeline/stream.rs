//! The line-buffered engine. Every scale runs on the full-resolution
//! raster with zero-interleaved kernels; scale `n` data lives on the
//! `2^n` lattice.

use crate::error::Result;
use crate::image::Image;
use crate::kernels::{self, interleave, CropSide};
use crate::scalar::Sample;
use crate::streaming::{
    run_node, stream_conv, stream_upsample, ConvNode, LatencyBuffer, NodeReport, PixelStream,
};

use super::params::CalibrationParams;
use super::preprocess::{preprocess_streaming, Homography};
use super::zones::zone_map;
use super::{check_frame, cross_terms, ScalarParams};

/// Line latencies of the cross-scale merge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatencyInfo {
    /// Latency buffer depth from the closed-form line count.
    pub buffer_lines: usize,
    /// Actual latency, in lines, of each scale's `(VW, WW)` output relative
    /// to the preprocessed input, summed over the node reports.
    pub path_lines: Vec<usize>,
}

impl LatencyInfo {
    /// Difference between the slowest and fastest scale paths.
    pub fn true_skew(&self) -> usize {
        self.path_lines.iter().max().unwrap() - self.path_lines[0]
    }
}

/// Closed-form per-scale latency: `base * 2^n + sum_{i=1..n} (U(i-1) + D(i-1))`
/// with `U(l) = 3 * 2^l`, `D(l) = 2^l` and `base` 10 with derivatives, 8
/// without.
pub fn formula_latency(n: usize, derivatives: bool) -> usize {
    let base = if derivatives { 10 } else { 8 };
    base * (1 << n) + (1..=n).map(|i| 4 * (1 << (i - 1))).sum::<usize>()
}

pub struct StreamRun<T> {
    pub z_raw: Image<T>,
    pub confidence: Image<T>,
    /// Per-scale and merge nodes, in construction order.
    pub reports: Vec<NodeReport>,
    /// Front-end nodes (denoise); not part of the line totals.
    pub preprocess_reports: Vec<NodeReport>,
    pub latency: LatencyInfo,
}

impl<T> StreamRun<T> {
    pub fn total_buffered_lines(&self) -> usize {
        self.reports.iter().map(|r| r.buffered_lines).sum()
    }
}

fn zip_stream<A: Clone, B: Clone, C>(
    a: &PixelStream<A>,
    b: &PixelStream<B>,
    lattice: u32,
    mut f: impl FnMut(usize, A, B) -> C,
) -> PixelStream<C> {
    assert_eq!(a.samples.len(), b.samples.len());
    PixelStream {
        width: a.width,
        height: a.height,
        lattice,
        samples: (0..a.samples.len()).map(|i| f(i, a.samples[i].clone(), b.samples[i].clone())).collect(),
    }
}

fn delay<S: Copy>(s: &PixelStream<S>, lines: usize, name: String) -> (PixelStream<S>, NodeReport) {
    let mut node = LatencyBuffer::new(&name, s.width, s.height, s.lattice, lines);
    let out = run_node(&mut node, s);
    (out, crate::streaming::StreamNode::report(&node))
}

fn named(mut r: NodeReport, name: String) -> NodeReport {
    r.name = name;
    r
}

/// Zero insertion and upsampling from lattice `from` down to lattice 0.
fn upsample_chain<T: Sample>(
    s: PixelStream<T>,
    from: u32,
    tag: &str,
    reports: &mut Vec<NodeReport>,
) -> Result<(PixelStream<T>, usize)> {
    let mut s = s;
    let mut lines = 0;
    for l in (0..from).rev() {
        let (u, rs) = stream_upsample(&s, l)?;
        for r in rs {
            lines += r.latency_lines;
            let name = format!("{tag}/{}", r.name);
            reports.push(named(r, name));
        }
        s = u;
    }
    Ok((s, lines))
}

/// One scale on lattice `n`. Returns `(VW, WW)` at lattice `n`, the next
/// scale's inputs and the latency of `(VW, WW)` relative to the inputs.
#[allow(clippy::type_complexity)]
fn scale_stage<T: Sample>(
    ave: &PixelStream<T>,
    delta: &PixelStream<T>,
    n: u32,
    params: &CalibrationParams,
    sp: &ScalarParams<T>,
    zones: &[u8],
    reports: &mut Vec<NodeReport>,
) -> Result<(PixelStream<T>, PixelStream<T>, PixelStream<T>, PixelStream<T>, usize)> {
    let tag = format!("s{n}");
    let g = kernels::gaussian5();
    let bx = kernels::box2(CropSide::TopLeft);

    let (g_ave, r_ga) = stream_conv(ave, &g, n)?;
    let (g_delta, r_gd) = stream_conv(delta, &g, n)?;
    let (mut next_ave, r_da) = stream_conv(&g_ave, &bx, n)?;
    let (mut next_delta, r_dd) = stream_conv(&g_delta, &bx, n)?;
    next_ave.lattice = n + 1;
    next_delta.lattice = n + 1;
    let (up, r_up) = stream_upsample(&next_ave, n)?;

    let align = r_ga.latency_lines + r_da.latency_lines + r_up.iter().map(|r| r.latency_lines).sum::<usize>();
    let (ave_d, r_ad) = delay(ave, align, format!("{tag}/delay_ave"));
    let (delta_d, r_dl) = delay(delta, align, format!("{tag}/delay_delta"));

    reports.push(named(r_ga, format!("{tag}/gauss_ave")));
    reports.push(named(r_gd, format!("{tag}/gauss_delta")));
    reports.push(named(r_da, format!("{tag}/down_ave")));
    reports.push(named(r_dd, format!("{tag}/down_delta")));
    for r in r_up {
        let name = format!("{tag}/lap_{}", r.name);
        reports.push(named(r, name));
    }
    reports.push(r_ad);
    reports.push(r_dl);

    let lap = zip_stream(&ave_d, &up, n, |_, a, u| a - u);

    let (laps, deltas, deriv_lines): (PixelStream<Vec<T>>, PixelStream<Vec<T>>, usize) = if params.derivatives_enabled {
        let (p, dx, dy) = kernels::deriv_kernels();
        let bank = [interleave(&p, n), interleave(&dx, n), interleave(&dy, n)];
        let mut nl = ConvNode::<T>::new(&format!("{tag}/deriv_lap"), &bank, ave.width, ave.height, n)?;
        let mut nd = ConvNode::<T>::new(&format!("{tag}/deriv_delta"), &bank, ave.width, ave.height, n)?;
        let l = run_node(&mut nl, &lap);
        let d = run_node(&mut nd, &delta_d);
        let (rl, rd) = (
            crate::streaming::StreamNode::report(&nl),
            crate::streaming::StreamNode::report(&nd),
        );
        let lines = rl.latency_lines;
        reports.push(rl);
        reports.push(rd);
        (l, d, lines)
    } else {
        (lap.map(|v| vec![v]), delta_d.map(|v| vec![v]), 0)
    };

    let n_est = params.estimates_per_scale();
    let omega = &sp.omega[3 * n as usize..3 * n as usize + n_est];
    let (a, b) = (&sp.a[n as usize], &sp.b[n as usize]);
    let pairs = zip_stream(&laps, &deltas, n, |i, l, d| {
        let z = zones[i] as usize;
        cross_terms(&l, &d, a[z], b[z], omega)
    });
    let vw = pairs.map(|p| p.0);
    let ww = pairs.map(|p| p.1);
    Ok((vw, ww, next_ave, next_delta, align + deriv_lines))
}

/// Streams a frame pair through the whole pipeline.
pub fn run_streaming<T: Sample>(i1: &Image<u8>, i2: &Image<u8>, params: &CalibrationParams) -> Result<StreamRun<T>> {
    params.validate()?;
    i1.check_same_dims(i2)?;
    let (width, height) = (i1.width, i1.height);
    check_frame(width, height, params)?;

    let h = Homography::from_f64(params.homography);
    let (ave_fx, delta_fx, preprocess_reports) = preprocess_streaming(i1, i2, &h, params.denoise)?;
    let mut ave = PixelStream::from_image(&ave_fx.to_samples::<T>());
    let mut delta = PixelStream::from_image(&delta_fx.to_samples::<T>());

    let sp = ScalarParams::<T>::new(params);
    let zones = zone_map(width, height, params);
    let mut reports = Vec::new();
    let mut outputs = Vec::new();
    let mut path_lines = Vec::new();
    let mut input_lines = 0;
    for n in 0..params.n_scales as u32 {
        let before = reports.len();
        let (vw, ww, next_ave, next_delta, stage_lines) = scale_stage(&ave, &delta, n, params, &sp, &zones, &mut reports)?;
        // the next scale starts after this scale's Gaussian and downsampler
        let feed = reports[before].latency_lines + reports[before + 2].latency_lines;
        let (vw, up_lines) = upsample_chain(vw, n, &format!("s{n}/vw_up"), &mut reports)?;
        let (ww, _) = upsample_chain(ww, n, &format!("s{n}/ww_up"), &mut reports)?;
        path_lines.push(input_lines + stage_lines + up_lines);
        input_lines += feed;
        outputs.push((vw, ww));
        ave = next_ave;
        delta = next_delta;
    }

    let latency = LatencyInfo {
        buffer_lines: formula_latency(params.n_scales - 1, params.derivatives_enabled) - formula_latency(0, params.derivatives_enabled),
        path_lines,
    };
    if latency.buffer_lines > 0 {
        let (vw0, ww0) = &outputs[0];
        let pair = zip_stream(vw0, ww0, 0, |_, a, b| (a, b));
        let (pair, r) = delay(&pair, latency.buffer_lines, "latency".into());
        reports.push(r);
        outputs[0] = (pair.map(|p| p.0), pair.map(|p| p.1));
    }

    let mut c = outputs[0].0.clone();
    let mut s = outputs[0].1.clone();
    for (vw, ww) in &outputs[1..] {
        c = zip_stream(&c, vw, 0, |_, x, y| x + y);
        s = zip_stream(&s, ww, 0, |_, x, y| x + y);
    }
    let z = zip_stream(&c, &s, 0, |_, num, den| num / den);
    Ok(StreamRun {
        z_raw: z.into_image(),
        confidence: c.into_image(),
        reports,
        preprocess_reports,
        latency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{counters, Half};

    fn textured(w: usize, h: usize, seed: u32) -> Image<u8> {
        Image::from_fn(w, h, |x, y| ((x * 37 + y * 91 + (x * y) % 13 + seed as usize * 7) % 256) as u8)
    }

    #[test]
    fn formula_latencies() {
        assert_eq!(formula_latency(1, true) - formula_latency(0, true), 14);
        assert_eq!(formula_latency(1, false) - formula_latency(0, false), 12);
        assert_eq!(formula_latency(2, true) - formula_latency(0, true), 42);
        assert_eq!(formula_latency(2, false) - formula_latency(0, false), 36);
    }

    #[test]
    fn buffered_lines_totals() {
        let (i1, i2) = (textured(32, 32, 1), textured(32, 32, 2));
        for (n, d, want) in [(1, false, 29), (1, true, 33), (2, false, 105), (2, true, 119)] {
            let p = CalibrationParams::uniform(32, 32, n, d, -1.0, 1.0);
            let run = run_streaming::<f64>(&i1, &i2, &p).unwrap();
            assert_eq!(run.total_buffered_lines(), want, "N={n} derivatives={d}");
        }
    }

    #[test]
    fn one_division_per_pixel() {
        let (i1, i2) = (textured(32, 24, 3), textured(32, 24, 4));
        let p = CalibrationParams::uniform(32, 24, 2, true, -1.0, 1.0);
        let before = counters::snapshot();
        run_streaming::<Half>(&i1, &i2, &p).unwrap();
        assert_eq!(counters::snapshot().since(before).divs, 32 * 24);
    }

    #[test]
    fn flat_scene_has_zero_confidence() {
        let flat = Image::new(32, 32, 120u8);
        let p = CalibrationParams::uniform(32, 32, 2, true, -1.0, 1.0);
        let run = run_streaming::<Half>(&flat, &flat, &p).unwrap();
        assert!(run.confidence.data.iter().all(|&c| c == Half::from_f64(0.0)));
    }
}
