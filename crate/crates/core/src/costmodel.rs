//! Static per-pixel FLOP and line-buffer accounting, and reconciliation
//! against an instrumented streaming run.

use std::fmt::{self, Write as _};
use std::ops::Add;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::kernels::{self, CropSide, Kernel};
use crate::numerics::{counters, Half};
use crate::pipeline::stream::formula_latency;
use crate::pipeline::{run_streaming, CalibrationParams};

/// Per-pixel arithmetic units.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CostBreakdown {
    pub adders: usize,
    pub true_mults: usize,
    pub easy_mults: usize,
    pub dividers: usize,
}

impl CostBreakdown {
    pub const fn new(adders: usize, true_mults: usize, easy_mults: usize, dividers: usize) -> Self {
        CostBreakdown {
            adders,
            true_mults,
            easy_mults,
            dividers,
        }
    }

    pub fn total_flops(&self) -> usize {
        self.adders + self.true_mults + self.easy_mults + self.dividers
    }

    pub fn times(self, k: usize) -> Self {
        CostBreakdown::new(self.adders * k, self.true_mults * k, self.easy_mults * k, self.dividers * k)
    }
}

impl Add for CostBreakdown {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        CostBreakdown::new(
            self.adders + o.adders,
            self.true_mults + o.true_mults,
            self.easy_mults + o.easy_mults,
            self.dividers + o.dividers,
        )
    }
}

impl std::iter::Sum for CostBreakdown {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(CostBreakdown::default(), Add::add)
    }
}

/// Pipeline operations with a fixed per-pixel cost.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Op {
    Gaussian5,
    Downsampler,
    Upsampler,
    VwStage,
    CrossMult { derivatives: bool },
    AddDivide { n_scales: usize },
}

impl Op {
    pub fn label(&self) -> String {
        match self {
            Op::Gaussian5 => "Gaussian 5x5 Filter".into(),
            Op::Downsampler => "Downsampler Filter".into(),
            Op::Upsampler => "Upsampler Filter".into(),
            Op::VwStage => "V_N & W_N".into(),
            Op::CrossMult { derivatives } => format!("Cross Mult. w/ Weights (DX_DY_ENABLE = {})", *derivatives as u8),
            Op::AddDivide { .. } => "Add and Divide".into(),
        }
    }
}

impl FromStr for Op {
    type Err = Error;

    /// `gaussian5`, `downsampler`, `upsampler`, `vw_stage`, `cross_mult`,
    /// `cross_mult_dxdy`, or `add_divide:N`.
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian5" => Op::Gaussian5,
            "downsampler" => Op::Downsampler,
            "upsampler" => Op::Upsampler,
            "vw_stage" => Op::VwStage,
            "cross_mult" => Op::CrossMult { derivatives: false },
            "cross_mult_dxdy" => Op::CrossMult { derivatives: true },
            _ => match s.strip_prefix("add_divide:").and_then(|n| n.parse().ok()) {
                Some(n_scales) if n_scales >= 1 => Op::AddDivide { n_scales },
                _ => return Err(Error::UnknownOp(s.into())),
            },
        })
    }
}

/// Cost of one separable filter: `taps - 1` adders per axis, power-of-two
/// taps are easy multiplies, the rest true multiplies, unit taps free.
pub fn kernel_costs(k: &Kernel) -> CostBreakdown {
    let axis = |taps: Vec<(isize, kernels::Coef)>| {
        let mut c = CostBreakdown::new(taps.len().saturating_sub(1), 0, 0, 0);
        for (_, t) in taps {
            let (n, d) = (t.numer().unsigned_abs(), t.denom().unsigned_abs());
            if n == 1 && d == 1 {
                continue;
            }
            if n.is_power_of_two() && d.is_power_of_two() {
                c.easy_mults += 1;
            } else {
                c.true_mults += 1;
            }
        }
        c
    };
    axis(k.col_taps()) + axis(k.row_taps())
}

pub fn op_costs(op: Op) -> CostBreakdown {
    match op {
        Op::Gaussian5 => kernel_costs(&kernels::gaussian5()),
        Op::Downsampler => kernel_costs(&kernels::box2(CropSide::TopLeft)),
        Op::Upsampler => kernel_costs(&kernels::upsampler_shifted4(CropSide::BottomRight)),
        Op::VwStage => CostBreakdown::new(2, 2, 0, 0),
        Op::CrossMult { derivatives: true } => CostBreakdown::new(8, 12, 10, 0),
        Op::CrossMult { derivatives: false } => CostBreakdown::new(0, 4, 0, 0),
        Op::AddDivide { n_scales } => CostBreakdown::new(2 * (n_scales - 1), 0, 0, 1),
    }
}

/// Looks an operation up by name.
pub fn op_costs_by_name(name: &str) -> Result<CostBreakdown> {
    Ok(op_costs(name.parse()?))
}

/// Per-pixel cost of scale `n`: two Gaussians, two downsamplers,
/// `1 + 2n` upsamplers, the V/W stage and one cross multiplication.
pub fn scale_flops(n: usize, derivatives: bool) -> CostBreakdown {
    op_costs(Op::Gaussian5).times(2)
        + op_costs(Op::Downsampler).times(2)
        + op_costs(Op::Upsampler).times(1 + 2 * n)
        + op_costs(Op::VwStage)
        + op_costs(Op::CrossMult { derivatives })
}

pub fn pipeline_flops(n_scales: usize, derivatives: bool) -> CostBreakdown {
    (0..n_scales).map(|n| scale_flops(n, derivatives)).sum::<CostBreakdown>() + op_costs(Op::AddDivide { n_scales })
}

/// Base kernel heights.
const G_H: usize = 5;
const D_H: usize = 2;
const U_H: usize = 4;
const P_H: usize = 3;

/// Lines held by one interleaved kernel of base height `h` at scale `n`.
fn kernel_lines(h: usize, n: usize) -> usize {
    (h - 1) << n
}

/// Scale buffers of scale `n`: four Gaussian, four downsampler, three
/// upsampler and (with derivatives) two pass/dx/dy buffers, plus two
/// upsamplers for every coarser lattice the outputs climb back through.
pub fn scale_lines(n: usize, derivatives: bool) -> usize {
    let own = 4 * kernel_lines(G_H, n)
        + 4 * kernel_lines(D_H, n)
        + 3 * kernel_lines(U_H, n)
        + if derivatives { 2 * kernel_lines(P_H, n) } else { 0 };
    own + 2 * (1..=n).map(|i| kernel_lines(U_H, i - 1)).sum::<usize>()
}

/// Line counts for a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LineBreakdown {
    pub scale_buffer_lines: usize,
    pub latency_buffer_lines: usize,
}

impl LineBreakdown {
    pub fn total_lines(&self) -> usize {
        self.scale_buffer_lines + self.latency_buffer_lines
    }
}

/// Latency buffer: slowest minus fastest scale latency.
pub fn latency_lines(n_scales: usize, derivatives: bool) -> usize {
    formula_latency(n_scales - 1, derivatives) - formula_latency(0, derivatives)
}

pub fn pipeline_lines(n_scales: usize, derivatives: bool) -> LineBreakdown {
    LineBreakdown {
        scale_buffer_lines: (0..n_scales).map(|n| scale_lines(n, derivatives)).sum(),
        latency_buffer_lines: latency_lines(n_scales, derivatives),
    }
}

/// Static line count against the instrumented node sum for one group.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditRow {
    pub group: String,
    pub static_lines: usize,
    pub measured_lines: usize,
    pub nodes: Vec<(String, usize)>,
}

/// Reconciliation of a streaming run with the static model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Audit {
    pub width: usize,
    pub height: usize,
    pub n_scales: usize,
    pub derivatives: bool,
    pub rows: Vec<AuditRow>,
    pub divs: u64,
    pub adds: u64,
    pub muls: u64,
    pub static_flops: CostBreakdown,
    /// Closed-form latency buffer against the measured path skew.
    pub formula_latency_lines: usize,
    pub true_skew_lines: usize,
    pub path_lines: Vec<usize>,
}

impl Audit {
    pub fn measured_total(&self) -> usize {
        self.rows.iter().map(|r| r.measured_lines).sum()
    }

    pub fn static_total(&self) -> usize {
        self.rows.iter().map(|r| r.static_lines).sum()
    }

    pub fn mismatches(&self) -> Vec<String> {
        let mut out: Vec<String> = self
            .rows
            .iter()
            .filter(|r| r.static_lines != r.measured_lines)
            .map(|r| format!("{}: static {} measured {}", r.group, r.static_lines, r.measured_lines))
            .collect();
        if self.divs != (self.width * self.height) as u64 {
            out.push(format!("dividers: {} calls for {} pixels", self.divs, self.width * self.height));
        }
        out
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "Audit: {}x{}, N = {}, DX_DY_ENABLE = {}\n",
            self.width, self.height, self.n_scales, self.derivatives as u8
        );
        let _ = writeln!(s, "| Group | Static lines | Measured lines |\n|---|---|---|");
        for r in &self.rows {
            let _ = writeln!(s, "| {} | {} | {} |", r.group, r.static_lines, r.measured_lines);
        }
        let _ = writeln!(s, "| Total | {} | {} |\n", self.static_total(), self.measured_total());
        let _ = writeln!(s, "| Node | Lines |\n|---|---|");
        for r in &self.rows {
            for (name, lines) in &r.nodes {
                let _ = writeln!(s, "| {name} | {lines} |");
            }
        }
        let px = (self.width * self.height) as f64;
        let _ = writeln!(
            s,
            "\nbinary16 calls per pixel: {:.2} adds, {:.2} muls, {:.2} divs (static model: {} FLOPs)",
            self.adds as f64 / px,
            self.muls as f64 / px,
            self.divs as f64 / px,
            self.static_flops.total_flops()
        );
        let _ = writeln!(
            s,
            "latency buffer: {} lines from the closed form, measured scale skew {} lines (paths {:?})",
            self.formula_latency_lines, self.true_skew_lines, self.path_lines
        );
        let mm = self.mismatches();
        if mm.is_empty() {
            let _ = writeln!(s, "no mismatches");
        } else {
            for m in mm {
                let _ = writeln!(s, "MISMATCH {m}");
            }
        }
        s
    }
}

/// Runs the binary16 streaming engine on the pair and reconciles buffered
/// lines by scale and the divider count.
pub fn audit(i1: &Image<u8>, i2: &Image<u8>, params: &CalibrationParams) -> Result<Audit> {
    let before = counters::snapshot();
    let run = run_streaming::<Half>(i1, i2, params)?;
    let ops = counters::snapshot().since(before);
    let d = params.derivatives_enabled;
    let mut rows: Vec<AuditRow> = (0..params.n_scales)
        .map(|n| AuditRow {
            group: format!("scale {n}"),
            static_lines: scale_lines(n, d),
            measured_lines: 0,
            nodes: Vec::new(),
        })
        .collect();
    rows.push(AuditRow {
        group: "latency".into(),
        static_lines: latency_lines(params.n_scales, d),
        measured_lines: 0,
        nodes: Vec::new(),
    });
    let last = rows.len() - 1;
    for r in &run.reports {
        let k = r
            .name
            .strip_prefix('s')
            .and_then(|t| t.split('/').next())
            .and_then(|t| t.parse::<usize>().ok())
            .filter(|&n| n < params.n_scales)
            .unwrap_or(last);
        rows[k].measured_lines += r.buffered_lines;
        rows[k].nodes.push((r.name.clone(), r.buffered_lines));
    }
    Ok(Audit {
        width: i1.width,
        height: i1.height,
        n_scales: params.n_scales,
        derivatives: d,
        rows,
        divs: ops.divs,
        adds: ops.adds,
        muls: ops.muls,
        static_flops: pipeline_flops(params.n_scales, d),
        formula_latency_lines: run.latency.buffer_lines,
        true_skew_lines: run.latency.true_skew(),
        path_lines: run.latency.path_lines.clone(),
    })
}

struct Row<'a>(&'a str, CostBreakdown);

impl fmt::Display for Row<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = self.1;
        write!(
            f,
            "| {} | {} | {} | {} | {} | {} |",
            self.0,
            c.adders,
            c.true_mults,
            c.easy_mults,
            c.dividers,
            c.total_flops()
        )
    }
}

/// Per-operation FLOP table. The add/divide row is shown for `n_scales`.
pub fn op_table_markdown(n_scales: usize) -> String {
    let mut s = String::from(
        "| Filter / Operation | Adders | True Mult. | Easy Mult. | Dividers | Total FLOPs |\n|---|---|---|---|---|---|\n",
    );
    for op in [
        Op::Gaussian5,
        Op::Downsampler,
        Op::Upsampler,
        Op::VwStage,
        Op::CrossMult { derivatives: true },
        Op::CrossMult { derivatives: false },
        Op::AddDivide { n_scales },
    ] {
        let _ = writeln!(s, "{}", Row(&op.label(), op_costs(op)));
    }
    s
}

pub fn flops_table_markdown(max_scales: usize) -> String {
    let mut s = String::from(
        "| N (Scales) | DX_DY_ENABLE | Adders | True Mult. | Easy Mult. | Dividers | Total FLOPs |\n|---|---|---|---|---|---|---|\n",
    );
    for n in 1..=max_scales {
        for d in [false, true] {
            let _ = writeln!(s, "{}", Row(&format!("{n} | {}", d as u8), pipeline_flops(n, d)));
        }
    }
    s
}

pub fn lines_table_markdown(max_scales: usize) -> String {
    let mut s = String::from(
        "| N (Scales) | DX_DY_ENABLE | Scale Buffers | Latency Buffers | Total Buffers |\n|---|---|---|---|---|\n",
    );
    for n in 1..=max_scales {
        for d in [false, true] {
            let l = pipeline_lines(n, d);
            let _ = writeln!(
                s,
                "| {n} | {} | {} | {} | {} |",
                d as u8,
                l.scale_buffer_lines,
                l.latency_buffer_lines,
                l.total_lines()
            );
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn per_op_rows() {
        assert_eq!(op_costs(Op::Gaussian5), CostBreakdown::new(8, 2, 8, 0));
        assert_eq!(op_costs(Op::Downsampler), CostBreakdown::new(2, 0, 4, 0));
        assert_eq!(op_costs(Op::Upsampler), CostBreakdown::new(6, 4, 4, 0));
        assert_eq!(op_costs(Op::Gaussian5).total_flops(), 18);
        assert_eq!(op_costs(Op::Upsampler).total_flops(), 14);
        assert_eq!(op_costs(Op::AddDivide { n_scales: 1 }).total_flops(), 1);
        assert_eq!(op_costs(Op::CrossMult { derivatives: true }).total_flops(), 30);
    }

    #[test]
    fn op_names() {
        assert_eq!(op_costs_by_name("add_divide:3").unwrap(), CostBreakdown::new(4, 0, 0, 1));
        assert!(matches!(op_costs_by_name("sobel"), Err(Error::UnknownOp(_))));
        assert!(op_costs_by_name("add_divide:0").is_err());
    }

    #[test]
    fn aggregate_rows() {
        assert_eq!(pipeline_flops(2, true), CostBreakdown::new(86, 52, 84, 1));
        assert_eq!(pipeline_flops(1, false), CostBreakdown::new(28, 14, 28, 1));
        assert_eq!(pipeline_flops(3, false), CostBreakdown::new(124, 66, 108, 1));
    }

    #[test]
    fn line_rows() {
        let l = pipeline_lines(2, true);
        assert_eq!((l.scale_buffer_lines, l.latency_buffer_lines, l.total_lines()), (105, 14, 119));
        assert_eq!(pipeline_lines(1, false).latency_buffer_lines, 0);
        assert_eq!(pipeline_lines(3, false).scale_buffer_lines, 227);
    }

    #[test]
    fn audit_small_frame() {
        let i1 = Image::from_fn(32, 32, |x, y| ((x * 29 + y * 53) % 251) as u8);
        let i2 = Image::from_fn(32, 32, |x, y| ((x * 31 + y * 47) % 241) as u8);
        for (n, d) in [(1, false), (1, true), (2, false), (2, true)] {
            let p = CalibrationParams::uniform(32, 32, n, d, -1.0, 1.0);
            let a = audit(&i1, &i2, &p).unwrap();
            assert!(a.mismatches().is_empty(), "{}", a.to_markdown());
            assert_eq!(a.measured_total(), pipeline_lines(n, d).total_lines());
        }
    }
}
