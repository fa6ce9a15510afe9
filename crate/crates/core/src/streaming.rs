//! Raster-order, line-buffered stream nodes.
//!
//! A node consumes one sample per tick in row-major order and emits samples
//! of its output frame in the same order once enough input has arrived. A
//! convolution node keeps exactly `(K_h - 1) * 2^N` previous lines plus a
//! register of the last few column sums; the incoming line overwrites the
//! oldest buffered line as it goes. Samples below the last input row are
//! produced at end of frame by replicating the last row on the node's
//! sampling lattice.
//!
//! Multi-rate stages use valid flags: a decimator simply emits nothing on
//! odd coordinates. The pipeline itself keeps every scale at full resolution
//! and marks the valid sampling grid with [`PixelStream::lattice`].

use std::collections::VecDeque;
use std::fmt;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::kernels::{self, border_index, interleave, Border, CropSide, Kernel, PreparedKernel, TapArith};

/// A frame delivered in raster order.
///
/// Samples whose coordinates are not multiples of `2^lattice` carry no
/// meaning; consumers only read the lattice positions.
#[derive(Clone, Debug, PartialEq)]
pub struct PixelStream<S> {
    pub width: usize,
    pub height: usize,
    pub lattice: u32,
    pub samples: Vec<S>,
}

impl<S: Clone> PixelStream<S> {
    pub fn from_image(img: &Image<S>) -> Self {
        PixelStream {
            width: img.width,
            height: img.height,
            lattice: 0,
            samples: img.data.clone(),
        }
    }

    pub fn into_image(self) -> Image<S> {
        Image {
            width: self.width,
            height: self.height,
            data: self.samples,
        }
    }

    pub fn to_image(&self) -> Image<S> {
        self.clone().into_image()
    }

    pub fn map<U>(&self, f: impl FnMut(S) -> U) -> PixelStream<U> {
        PixelStream {
            width: self.width,
            height: self.height,
            lattice: self.lattice,
            samples: self.samples.iter().cloned().map(f).collect(),
        }
    }
}

impl<S: Copy> PixelStream<S> {
    /// Samples on the `2^lattice` grid, as a dense image.
    pub fn lattice_image(&self) -> Image<S> {
        let step = 1 << self.lattice;
        let w = self.width.div_ceil(step);
        let h = self.height.div_ceil(step);
        Image::from_fn(w, h, |x, y| self.samples[y * step * self.width + x * step])
    }
}

/// Static description of a node, used by the cost audit.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NodeReport {
    pub name: String,
    pub footprint: (usize, usize),
    /// Latency in lines under the convention that a node's output trails its
    /// input by its full line storage.
    pub latency_lines: usize,
    pub buffered_lines: usize,
}

impl fmt::Display for NodeReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} footprint={}x{:<3} latency_lines={:<3} buffered_lines={}",
            self.name, self.footprint.0, self.footprint.1, self.latency_lines, self.buffered_lines
        )
    }
}

/// Renders node reports as the plain-text diagnostic dump.
pub fn format_reports(reports: &[NodeReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    let total: usize = reports.iter().map(|r| r.buffered_lines).sum();
    out.push_str(&format!("total buffered_lines={total}\n"));
    out
}

/// Read-side instrumentation: a node must never look at an input sample it
/// has not been given yet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Causality {
    pub received: u64,
    pub reads: u64,
    pub violations: u64,
}

impl Causality {
    #[inline]
    fn check(&mut self, index: u64) {
        self.reads += 1;
        if index >= self.received {
            self.violations += 1;
        }
    }
}

/// A raster-order stream transformer.
pub trait StreamNode<I, O> {
    /// Consumes one input sample, possibly emitting output samples.
    fn push(&mut self, sample: I, out: &mut Vec<O>);
    /// Signals end of frame; emits whatever is still owed.
    fn finish(&mut self, out: &mut Vec<O>);
    fn report(&self) -> NodeReport;
    /// Dimensions and lattice of the output frame.
    fn output_shape(&self) -> (usize, usize, u32);
}

/// Streams a whole frame through `node`.
pub fn run_node<I: Clone, O, N: StreamNode<I, O> + ?Sized>(
    node: &mut N,
    input: &PixelStream<I>,
) -> PixelStream<O> {
    let mut out = Vec::with_capacity(input.samples.len());
    for s in &input.samples {
        node.push(s.clone(), &mut out);
    }
    node.finish(&mut out);
    let (width, height, lattice) = node.output_shape();
    assert_eq!(out.len(), width * height, "{} emitted a short frame", node.report().name);
    PixelStream {
        width,
        height,
        lattice,
        samples: out,
    }
}

/// A bank of separable kernels sharing one footprint, applied through a
/// single set of line buffers. Emits one output per kernel per pixel, in
/// kernel order, as consecutive samples of a `Vec`.
pub struct ConvNode<A: TapArith> {
    name: String,
    width: usize,
    height: usize,
    lattice: u32,
    border: Border,
    footprint: (usize, usize),
    /// Rows needed below / columns needed right of the output position.
    down: usize,
    right: usize,
    kernels: Vec<PreparedKernel<A>>,
    /// `buffered` full lines; slot `r % buffered` holds input row `r`.
    lines: Vec<Vec<A>>,
    buffered: usize,
    /// Column sums per kernel for the last `footprint.1` columns, indexed
    /// by column modulo the register length.
    colsums: Vec<Vec<Option<A>>>,
    row: usize,
    col: usize,
    /// Output row currently being assembled, and next column to emit in it.
    emit_col: usize,
    pub causality: Causality,
}

impl<A: TapArith> ConvNode<A> {
    /// `kernels` must be separable and share footprint and anchor.
    pub fn new(name: &str, kernels: &[Kernel], width: usize, height: usize, lattice: u32) -> Result<Self> {
        let first = &kernels[0];
        let (kh, kw) = first.footprint();
        for k in kernels {
            assert_eq!(k.footprint(), (kh, kw), "kernel bank footprints differ");
            assert_eq!(k.anchor, first.anchor, "kernel bank anchors differ");
        }
        if height < kh || width < kw {
            return Err(Error::ImageTooSmall { width, height, kh, kw });
        }
        let buffered = kh - 1;
        Ok(ConvNode {
            name: name.to_string(),
            width,
            height,
            lattice,
            border: Border::Replicate,
            footprint: (kh, kw),
            down: kh - 1 - first.anchor.0,
            right: kw - 1 - first.anchor.1,
            kernels: kernels.iter().map(PreparedKernel::new).collect(),
            lines: vec![Vec::new(); buffered],
            buffered,
            colsums: vec![vec![None; kw]; kernels.len()],
            row: 0,
            col: 0,
            emit_col: 0,
            causality: Causality::default(),
        })
    }

    pub fn with_border(mut self, border: Border) -> Self {
        self.border = border;
        self
    }

    /// Reads input (row, col) from the line store, or from the sample that
    /// is arriving right now.
    fn read(&mut self, r: usize, c: usize, current: Option<A>) -> A {
        self.causality.check((r * self.width + c) as u64);
        if r == self.row {
            if let Some(v) = current {
                if c == self.col {
                    return v;
                }
            }
        }
        if self.buffered == 0 {
            return current.expect("single-row kernels read only the arriving sample");
        }
        self.lines[r % self.buffered][c]
    }

    /// Vertical pass for output row `out_row` at input column `c`.
    fn column_sums(&mut self, out_row: usize, c: usize, current: Option<A>) {
        let last_row = if current.is_some() { self.row } else { self.height - 1 };
        for k in 0..self.kernels.len() {
            let mut acc: Option<A> = None;
            for t in 0..self.kernels[k].col.len() {
                let (dy, coef) = self.kernels[k].col[t];
                let Some(sy) = border_index(out_row as isize + dy, self.height, self.lattice, self.border) else {
                    continue;
                };
                debug_assert!(sy <= last_row);
                let v = self.read(sy, c, current);
                let term = A::scaled(coef, v);
                acc = Some(match acc {
                    None => term,
                    Some(a) => A::add(a, term),
                });
            }
            let slot = c % self.footprint.1;
            self.colsums[k][slot] = acc;
        }
    }

    /// Horizontal pass for output (out_row, c) from the column-sum register.
    fn emit(&mut self, c: usize, out: &mut Vec<Vec<A>>) {
        let mut values = Vec::with_capacity(self.kernels.len());
        for k in 0..self.kernels.len() {
            let mut acc: Option<A> = None;
            for &(dx, coef) in &self.kernels[k].row {
                let Some(sx) = border_index(c as isize + dx, self.width, self.lattice, self.border) else {
                    continue;
                };
                let cs = self.colsums[k][sx % self.footprint.1].expect("column sum present");
                let term = A::scaled(coef, cs);
                acc = Some(match acc {
                    None => term,
                    Some(a) => A::add(a, term),
                });
            }
            values.push(acc.expect("kernel has a nonzero tap"));
        }
        out.push(values);
    }

    /// Emits every output whose rightmost column sum is now known.
    fn emit_ready(&mut self, c: usize, out: &mut Vec<Vec<A>>) {
        while self.emit_col + self.right <= c {
            let e = self.emit_col;
            self.emit(e, out);
            self.emit_col += 1;
        }
    }

    /// Finishes output row `out_row` after its last column sum is known.
    fn flush_row_tail(&mut self, out: &mut Vec<Vec<A>>) {
        while self.emit_col < self.width {
            let c = self.emit_col;
            self.emit(c, out);
            self.emit_col += 1;
        }
        self.emit_col = 0;
    }

    fn push_many(&mut self, sample: A, out: &mut Vec<Vec<A>>) {
        self.causality.received += 1;
        let (r, c) = (self.row, self.col);
        if r >= self.down {
            let out_row = r - self.down;
            self.column_sums(out_row, c, Some(sample));
            self.emit_ready(c, out);
            if c == self.width - 1 {
                self.flush_row_tail(out);
            }
        }
        if self.buffered > 0 {
            let slot = r % self.buffered;
            if self.lines[slot].is_empty() {
                self.lines[slot] = vec![sample; self.width];
            }
            self.lines[slot][c] = sample;
        }
        self.col += 1;
        if self.col == self.width {
            self.col = 0;
            self.row += 1;
        }
    }

    fn finish_many(&mut self, out: &mut Vec<Vec<A>>) {
        assert_eq!(self.row, self.height, "{}: frame ended early", self.name);
        let first_pending = self.height.saturating_sub(self.down);
        for out_row in first_pending..self.height {
            for c in 0..self.width {
                self.column_sums(out_row, c, None);
                self.emit_ready(c, out);
            }
            self.flush_row_tail(out);
        }
    }

    pub fn buffered_lines(&self) -> usize {
        self.buffered
    }
}

impl<A: TapArith> StreamNode<A, Vec<A>> for ConvNode<A> {
    fn push(&mut self, sample: A, out: &mut Vec<Vec<A>>) {
        self.push_many(sample, out);
    }

    fn finish(&mut self, out: &mut Vec<Vec<A>>) {
        self.finish_many(out);
    }

    fn report(&self) -> NodeReport {
        NodeReport {
            name: self.name.clone(),
            footprint: self.footprint,
            latency_lines: self.buffered,
            buffered_lines: self.buffered,
        }
    }

    fn output_shape(&self) -> (usize, usize, u32) {
        (self.width, self.height, self.lattice)
    }
}

/// Adapts a one-kernel [`ConvNode`] to a plain sample stream.
pub struct SingleConv<A: TapArith>(pub ConvNode<A>);

impl<A: TapArith> StreamNode<A, A> for SingleConv<A> {
    fn push(&mut self, sample: A, out: &mut Vec<A>) {
        let mut tmp = Vec::new();
        self.0.push_many(sample, &mut tmp);
        out.extend(tmp.into_iter().map(|v| v[0]));
    }

    fn finish(&mut self, out: &mut Vec<A>) {
        let mut tmp = Vec::new();
        self.0.finish_many(&mut tmp);
        out.extend(tmp.into_iter().map(|v| v[0]));
    }

    fn report(&self) -> NodeReport {
        self.0.report()
    }

    fn output_shape(&self) -> (usize, usize, u32) {
        self.0.output_shape()
    }
}

/// Convolves a stream with `base` zero-interleaved to `scale`.
///
/// Borders clamp to the stream's sampling lattice, which for a scale-`N`
/// kernel is `N`.
pub fn stream_conv<A: TapArith>(
    input: &PixelStream<A>,
    base: &Kernel,
    scale: u32,
) -> Result<(PixelStream<A>, NodeReport)> {
    stream_conv_border(input, base, scale, Border::Replicate)
}

pub fn stream_conv_border<A: TapArith>(
    input: &PixelStream<A>,
    base: &Kernel,
    scale: u32,
    border: Border,
) -> Result<(PixelStream<A>, NodeReport)> {
    let k = interleave(base, scale);
    let node = ConvNode::new(&k.name, std::slice::from_ref(&k), input.width, input.height, scale)?.with_border(border);
    let mut node = SingleConv(node);
    let out = run_node(&mut node, input);
    Ok((out, node.report()))
}

/// Box filter followed by dropping odd rows and columns.
pub struct Decimate2<A: TapArith> {
    conv: ConvNode<A>,
    emitted: usize,
}

impl<A: TapArith> Decimate2<A> {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if !width.is_multiple_of(2) || !height.is_multiple_of(2) {
            return Err(Error::OddDims { width, height });
        }
        Ok(Decimate2 {
            conv: ConvNode::new("decimate2", &[kernels::box2(CropSide::TopLeft)], width, height, 0)?,
            emitted: 0,
        })
    }

    fn keep(&mut self, produced: Vec<Vec<A>>, out: &mut Vec<A>) {
        for v in produced {
            let (x, y) = (self.emitted % self.conv.width, self.emitted / self.conv.width);
            if x % 2 == 0 && y % 2 == 0 {
                out.push(v[0]);
            }
            self.emitted += 1;
        }
    }
}

impl<A: TapArith> StreamNode<A, A> for Decimate2<A> {
    fn push(&mut self, sample: A, out: &mut Vec<A>) {
        let mut tmp = Vec::new();
        self.conv.push_many(sample, &mut tmp);
        self.keep(tmp, out);
    }

    fn finish(&mut self, out: &mut Vec<A>) {
        let mut tmp = Vec::new();
        self.conv.finish_many(&mut tmp);
        self.keep(tmp, out);
    }

    fn report(&self) -> NodeReport {
        self.conv.report()
    }

    fn output_shape(&self) -> (usize, usize, u32) {
        (self.conv.width / 2, self.conv.height / 2, 0)
    }
}

/// Halves a stream: 2x2 box (top-left crop) sampled at even coordinates.
pub fn decimate2<A: TapArith>(input: &PixelStream<A>) -> Result<PixelStream<A>> {
    let mut node = Decimate2::new(input.width, input.height)?;
    Ok(run_node(&mut node, input))
}

/// Keeps samples whose coordinates are multiples of `2^(scale+1)` and
/// zeroes the rest. Counter-based, no storage.
pub struct ZeroInsert<A> {
    width: usize,
    height: usize,
    scale: u32,
    x: usize,
    y: usize,
    zero: A,
}

impl<A: Copy> ZeroInsert<A> {
    pub fn new(width: usize, height: usize, scale: u32, zero: A) -> Self {
        ZeroInsert {
            width,
            height,
            scale,
            x: 0,
            y: 0,
            zero,
        }
    }
}

impl<A: Copy> StreamNode<A, A> for ZeroInsert<A> {
    fn push(&mut self, sample: A, out: &mut Vec<A>) {
        let mask = (1usize << (self.scale + 1)) - 1;
        out.push(if self.x & mask == 0 && self.y & mask == 0 {
            sample
        } else {
            self.zero
        });
        self.x += 1;
        if self.x == self.width {
            self.x = 0;
            self.y += 1;
        }
    }

    fn finish(&mut self, _out: &mut Vec<A>) {}

    fn report(&self) -> NodeReport {
        NodeReport {
            name: format!("zero_insert@{}", self.scale),
            footprint: (1, 1),
            latency_lines: 0,
            buffered_lines: 0,
        }
    }

    fn output_shape(&self) -> (usize, usize, u32) {
        (self.width, self.height, self.scale)
    }
}

/// Zero insertion on a full-resolution stream. A compact input (lattice 0)
/// of size `w x h` at `scale = 0` is first spread onto a `2w x 2h` raster.
pub fn zero_insert<A: Copy>(input: &PixelStream<A>, scale: u32, zero: A) -> (PixelStream<A>, NodeReport) {
    let mut node = ZeroInsert::new(input.width, input.height, scale, zero);
    let out = run_node(&mut node, input);
    (out, node.report())
}

/// Spreads a compact frame onto a raster twice the size at even
/// coordinates, zero elsewhere.
pub fn spread2<A: Copy>(input: &PixelStream<A>, zero: A) -> PixelStream<A> {
    let (w, h) = (input.width * 2, input.height * 2);
    let mut samples = vec![zero; w * h];
    for y in 0..input.height {
        for x in 0..input.width {
            samples[2 * y * w + 2 * x] = input.samples[y * input.width + x];
        }
    }
    PixelStream {
        width: w,
        height: h,
        lattice: 0,
        samples,
    }
}

/// Zero insertion followed by the `(1 3 3 1)/4` upsampler interleaved to
/// `scale`. Input valid on lattice `scale + 1`, output on lattice `scale`.
pub fn stream_upsample<A: TapArith + num_traits::Zero>(
    input: &PixelStream<A>,
    scale: u32,
) -> Result<(PixelStream<A>, Vec<NodeReport>)> {
    let (z, zr) = zero_insert(input, scale, A::zero());
    let (u, ur) = stream_conv_border(&z, &kernels::upsampler_shifted4(CropSide::BottomRight), scale, Border::ZeroInserted)?;
    Ok((u, vec![zr, ur]))
}

/// Pure delay of `delay_lines` whole lines.
pub struct LatencyBuffer<S> {
    name: String,
    width: usize,
    height: usize,
    lattice: u32,
    delay_lines: usize,
    fifo: VecDeque<S>,
}

impl<S: Copy> LatencyBuffer<S> {
    pub fn new(name: &str, width: usize, height: usize, lattice: u32, delay_lines: usize) -> Self {
        LatencyBuffer {
            name: name.to_string(),
            width,
            height,
            lattice,
            delay_lines,
            fifo: VecDeque::with_capacity(delay_lines * width + 1),
        }
    }
}

impl<S: Copy> StreamNode<S, S> for LatencyBuffer<S> {
    fn push(&mut self, sample: S, out: &mut Vec<S>) {
        self.fifo.push_back(sample);
        if self.fifo.len() > self.delay_lines * self.width {
            out.push(self.fifo.pop_front().expect("non-empty"));
        }
    }

    fn finish(&mut self, out: &mut Vec<S>) {
        out.extend(self.fifo.drain(..));
    }

    fn report(&self) -> NodeReport {
        NodeReport {
            name: self.name.clone(),
            footprint: (1, 1),
            latency_lines: self.delay_lines,
            buffered_lines: self.delay_lines,
        }
    }

    fn output_shape(&self) -> (usize, usize, u32) {
        (self.width, self.height, self.lattice)
    }
}

pub fn latency_buffer<S: Copy>(input: &PixelStream<S>, delay_lines: usize) -> (PixelStream<S>, NodeReport) {
    let mut node = LatencyBuffer::new("latency", input.width, input.height, input.lattice, delay_lines);
    let out = run_node(&mut node, input);
    (out, node.report())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{conv2_border, conv2_dense, conv2_lattice, gaussian5};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_stream(w: usize, h: usize, seed: u64) -> PixelStream<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PixelStream::from_image(&Image::from_fn(w, h, |_, _| rng.random_range(0..256) as f64))
    }

    #[test]
    fn gaussian_buffer_lines() {
        let s = random_stream(20, 20, 1);
        assert_eq!(stream_conv(&s, &gaussian5(), 0).unwrap().1.buffered_lines, 4);
        assert_eq!(stream_conv(&s, &gaussian5(), 1).unwrap().1.buffered_lines, 8);
        let (_, reports) = stream_upsample(&s, 0).unwrap();
        assert_eq!(reports.iter().map(|r| r.buffered_lines).sum::<usize>(), 3);
        assert_eq!(reports[0].buffered_lines, 0);
    }

    #[test]
    fn stream_conv_matches_dense() {
        let (pass, dx, dy) = kernels::deriv_kernels();
        for (i, k) in [gaussian5(), kernels::box2(CropSide::TopLeft), kernels::upsampler_shifted4(CropSide::BottomRight), pass, dx, dy]
            .iter()
            .enumerate()
        {
            for scale in 0..3 {
                let s = random_stream(20 + 4 * i, 20 + 3 * scale as usize, i as u64 * 10 + scale as u64);
                let (out, _) = stream_conv(&s, k, scale).unwrap();
                let dense = conv2_lattice(&s.to_image(), &interleave(k, scale), scale).unwrap();
                assert_eq!(out.to_image(), dense, "{} at scale {scale}", k.name);
                let (out, _) = stream_conv_border(&s, k, scale, Border::ZeroInserted).unwrap();
                if k.separable.is_some() && k.base_height() > 2 {
                    let dense = conv2_border(&s.to_image(), &interleave(k, scale), scale, Border::ZeroInserted).unwrap();
                    assert_eq!(out.to_image(), dense, "{} zero-inserted at scale {scale}", k.name);
                }
            }
        }
    }

    #[test]
    fn conv_node_is_causal() {
        let k = interleave(&gaussian5(), 1);
        let mut node = ConvNode::<f64>::new("g", &[k], 24, 20, 1).unwrap();
        let s = random_stream(24, 20, 5);
        let mut out = Vec::new();
        for &v in &s.samples {
            node.push(v, &mut out);
        }
        node.finish(&mut out);
        assert_eq!(out.len(), 24 * 20);
        assert!(node.causality.reads > 0);
        assert_eq!(node.causality.violations, 0);
    }

    #[test]
    fn decimate_cases() {
        let c = PixelStream::from_image(&Image::new(6, 4, 3.5));
        let d = decimate2(&c).unwrap();
        assert_eq!((d.width, d.height), (3, 2));
        assert!(d.samples.iter().all(|&v| v == 3.5));
        let tiny = PixelStream::from_image(&Image::from_vec(2, 2, vec![1.0, 2.0, 3.0, 6.0]).unwrap());
        // box2 needs a 2x2 image: fits exactly
        assert_eq!(decimate2(&tiny).unwrap().samples, vec![3.0]);
        assert!(matches!(
            decimate2(&PixelStream::from_image(&Image::new(5, 4, 0.0))),
            Err(Error::OddDims { .. })
        ));
    }

    #[test]
    fn decimate_matches_box_then_subsample() {
        let s = random_stream(8, 8, 9);
        let boxed = conv2_dense(&s.to_image(), &kernels::box2(CropSide::TopLeft)).unwrap();
        let d = decimate2(&s).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(d.samples[y * 4 + x], boxed.get(2 * x, 2 * y));
            }
        }
    }

    #[test]
    fn zero_insert_definition() {
        let s = PixelStream::from_image(&Image::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let spread = spread2(&s, 0.0);
        let (z, r) = zero_insert(&spread, 0, 0.0);
        assert_eq!(r.buffered_lines, 0);
        assert_eq!(z.samples[0], 1.0);
        assert_eq!(z.samples[2], 2.0);
        assert_eq!(z.samples[8], 3.0);
        assert_eq!(z.samples[10], 4.0);
        assert_eq!(z.samples.iter().filter(|&&v| v != 0.0).count(), 4);
        let zeros = PixelStream::from_image(&Image::new(8, 8, 0.0));
        assert!(zero_insert(&zeros, 1, 0.0).0.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn latency_buffer_delays_whole_lines() {
        let s = random_stream(7, 6, 2);
        let (same, r) = latency_buffer(&s, 0);
        assert_eq!(same, s);
        assert_eq!(r.buffered_lines, 0);
        let mut node = LatencyBuffer::new("d", 7, 6, 0, 2);
        let mut out = Vec::new();
        for (t, &v) in s.samples.iter().enumerate() {
            node.push(v, &mut out);
            if t >= 14 {
                assert_eq!(*out.last().unwrap(), s.samples[t - 14]);
            } else {
                assert!(out.is_empty());
            }
        }
        node.finish(&mut out);
        assert_eq!(out, s.samples);
    }

    #[test]
    fn upsample_constant_interior() {
        let c = PixelStream {
            lattice: 1,
            ..PixelStream::from_image(&Image::new(16, 16, 2.0))
        };
        let (u, _) = stream_upsample(&c, 0).unwrap();
        assert!(u.samples.iter().all(|&v| v == 2.0));
    }
}
