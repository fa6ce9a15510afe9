//! Calibration of per-zone `a`, `b` and the weights `omega` against a plane
//! sweep, followed by confidence-threshold selection.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::kernels::{self, border_index, Border, CropSide};
use crate::pipeline::{CalibrationParams, N_ZONES};
use crate::reference::{
    combine, combine_with_metric, free_params, precompute, select_confident, ConfidenceMetric, Labeled,
    LossConfig, ParamRef,
};
use crate::synth::{DatasetItem, OpticalConfig};

/// Features of every pair in a sweep, with the true plane depths.
#[derive(Clone, Debug)]
pub struct CalibSet {
    pub items: Vec<Labeled>,
    pub depths: Vec<f64>,
}

impl CalibSet {
    /// Precomputes features; only the structural fields of `params` matter.
    pub fn build(data: &[DatasetItem], params: &CalibrationParams) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut items = Vec::with_capacity(data.len());
        for d in data {
            let features = precompute::<f64>(&d.i1, &d.i2, params)?;
            let truth = Image::new(features.width, features.height, d.z_true);
            items.push(Labeled { features, truth });
        }
        Ok(CalibSet {
            items,
            depths: data.iter().map(|d| d.z_true).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Thin-lens starting point. `b` is the crossover power `rho - 1/s` of the
/// optics; the gain `a` absorbs the aperture together with the intensity
/// and Laplacian units of the implementation, so it is fitted per scale by
/// least squares on `a (b - rho) L = I_delta`.
pub fn physical_init(set: &CalibSet, optics: &OpticalConfig, template: &CalibrationParams) -> CalibrationParams {
    let mut p = template.clone();
    let b = optics.crossover_power();
    let n_est = p.estimates_per_scale();
    for n in 0..p.n_scales {
        let (mut num, mut den) = (0.0, 0.0);
        for (item, &z) in set.items.iter().zip(&set.depths) {
            let sf = &item.features.scales[n];
            for k in 0..n_est {
                for (l, d) in sf.lap[k].data.iter().zip(&sf.delta[k].data) {
                    let x = l * (b - 1.0 / z);
                    num += x * d;
                    den += x * x;
                }
            }
        }
        let a = if den > 0.0 { num / den } else { -optics.aperture * optics.aperture };
        for zone in &mut p.zones {
            zone.a[n] = a;
            zone.b[n] = b;
        }
    }
    p
}

/// Rows of the 1-D upsampling operator: output index -> `(input, weight)`.
fn upsample_rows(coarse: usize) -> Vec<Vec<(usize, f64)>> {
    let k = kernels::upsampler_shifted4(CropSide::BottomRight);
    let taps: Vec<(isize, f64)> = k.col_taps().into_iter().map(|(o, t)| (o, *t.numer() as f64 / *t.denom() as f64)).collect();
    let fine = 2 * coarse;
    (0..fine)
        .map(|x| {
            taps.iter()
                .filter_map(|&(o, t)| {
                    let s = border_index(x as isize + o, fine, 0, Border::ZeroInserted)?;
                    (s % 2 == 0).then_some((s / 2, t))
                })
                .collect()
        })
        .collect()
}

/// Transpose of one upsampling step applied to a full-resolution gradient.
fn upsample_adjoint(g: &Image<f64>) -> Image<f64> {
    let (cw, ch) = (g.width / 2, g.height / 2);
    let (rx, ry) = (upsample_rows(cw), upsample_rows(ch));
    let mut tmp = Image::new(cw, g.height, 0.0);
    for y in 0..g.height {
        for (x, row) in rx.iter().enumerate() {
            let v = g.get(x, y);
            for &(s, t) in row {
                tmp.data[y * cw + s] += t * v;
            }
        }
    }
    let mut out = Image::new(cw, ch, 0.0);
    for (y, row) in ry.iter().enumerate() {
        for &(s, t) in row {
            for x in 0..cw {
                out.data[s * cw + x] += t * tmp.get(x, y);
            }
        }
    }
    out
}

/// Masked MAE under the default confidence metric and its exact gradient
/// with the confident-pixel selection held fixed.
pub fn loss_and_gradient(set: &CalibSet, params: &CalibrationParams, refs: &[ParamRef], cfg: &LossConfig) -> (f64, Vec<f64>) {
    let n_est = params.estimates_per_scale();
    let mut ga = vec![vec![0.0; N_ZONES]; params.n_scales];
    let mut gb = vec![vec![0.0; N_ZONES]; params.n_scales];
    let mut gw = vec![0.0; params.omega.len()];
    let mut err = 0.0;
    let mut count = 0usize;
    for item in &set.items {
        let f = &item.features;
        let out = combine(f, params);
        let sel = select_confident(&out.z, &out.c, &f.zones, cfg);
        let mut gc = Image::new(f.width, f.height, 0.0);
        let mut gs = Image::new(f.width, f.height, 0.0);
        for &i in sel.iter().flatten() {
            let e = out.z.data[i] - item.truth.data[i];
            err += e.abs();
            count += 1;
            let s = e.signum();
            gc.data[i] = s / out.s.data[i];
            gs.data[i] = -s * out.c.data[i] / (out.s.data[i] * out.s.data[i]);
        }
        for (n, sf) in f.scales.iter().enumerate() {
            if n > 0 {
                gc = upsample_adjoint(&gc);
                gs = upsample_adjoint(&gs);
            }
            for i in 0..sf.zones.len() {
                let (dc, ds) = (gc.data[i], gs.data[i]);
                if dc == 0.0 && ds == 0.0 {
                    continue;
                }
                let zone = sf.zones[i] as usize;
                let (a, b) = (params.zones[zone].a[n], params.zones[zone].b[n]);
                for k in 0..n_est {
                    let om = params.omega_for(n, k);
                    let (l, d) = (sf.lap[k].data[i], sf.delta[k].data[i]);
                    let v = a * l;
                    let w = b * v - d;
                    ga[n][zone] += om * (dc * (l * w + v * b * l) + ds * 2.0 * w * b * l);
                    gb[n][zone] += om * (dc * v * v + ds * 2.0 * w * v);
                    gw[3 * n + k] += dc * v * w + ds * w * w;
                }
            }
        }
    }
    if count == 0 {
        return (f64::NAN, vec![0.0; refs.len()]);
    }
    let c = count as f64;
    let grad = refs
        .iter()
        .map(|&r| {
            (match r {
                ParamRef::A { zone, scale } => ga[scale][zone],
                ParamRef::B { zone, scale } => gb[scale][zone],
                ParamRef::Omega(i) => gw[i],
            }) / c
        })
        .collect();
    (err / c, grad)
}

/// Optimizer settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizeConfig {
    pub iters: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub loss: LossConfig,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            iters: 100,
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            loss: LossConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct OptimizeOutcome {
    pub params: CalibrationParams,
    /// Loss before each step, then the loss of the returned parameters.
    pub history: Vec<f64>,
}

/// Adam over every free `a`, `b` and `omega`. Each parameter moves in the
/// relative coordinate `p = p0 + |p0| u`, so one learning rate suits
/// parameters of very different magnitude. Returns the lowest-loss iterate.
pub fn optimize(set: &CalibSet, init: &CalibrationParams, cfg: &OptimizeConfig) -> Result<OptimizeOutcome> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    init.validate()?;
    let refs = free_params(init);
    let p0: Vec<f64> = refs.iter().map(|r| r.get(init)).collect();
    let unit: Vec<f64> = p0.iter().map(|v| if *v == 0.0 { 1.0 } else { v.abs() }).collect();
    let mut u = vec![0.0; refs.len()];
    let (mut m, mut v) = (vec![0.0; refs.len()], vec![0.0; refs.len()]);
    let mut params = init.clone();
    let mut best = (f64::INFINITY, init.clone());
    let mut history = Vec::with_capacity(cfg.iters + 1);
    for t in 1..=cfg.iters + 1 {
        let (loss, grad) = loss_and_gradient(set, &params, &refs, &cfg.loss);
        if t == 1 && !loss.is_finite() {
            return Err(Error::BadInitialization(format!(
                "initial loss is {loss}; start from the thin-lens values a = -A^2, b = rho - 1/s"
            )));
        }
        history.push(loss);
        if loss < best.0 {
            best = (loss, params.clone());
        }
        if t > cfg.iters {
            break;
        }
        for j in 0..refs.len() {
            let g = grad[j] * unit[j];
            if !g.is_finite() {
                continue;
            }
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
            let mh = m[j] / (1.0 - cfg.beta1.powi(t as i32));
            let vh = v[j] / (1.0 - cfg.beta2.powi(t as i32));
            u[j] -= cfg.lr * mh / (vh.sqrt() + cfg.eps);
            refs[j].set(&mut params, p0[j] + unit[j] * u[j]);
        }
    }
    if let Some(last) = history.last_mut() {
        *last = best.0;
    }
    Ok(OptimizeOutcome { params: best.1, history })
}

/// One row of a depth sweep evaluation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DepthRow {
    pub z_true: f64,
    pub mae: f64,
    pub density: f64,
    pub in_range: bool,
}

/// Sweep evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CalibReport {
    pub final_loss: f64,
    pub metric: ConfidenceMetric,
    pub sparsity: Option<f64>,
    pub rows: Vec<DepthRow>,
    /// Inclusive bounds of the longest run of in-range depths.
    pub working_range: Option<(f64, f64)>,
    pub params: CalibrationParams,
}

/// Minimum fraction of valid pixels for a depth to count as in range.
pub const DENSITY_FLOOR: f64 = 0.05;
/// In range when `MAE < REL_ERROR * Z_true`.
pub const REL_ERROR: f64 = 0.1;

impl CalibReport {
    pub fn working_range_width(&self) -> f64 {
        self.working_range.map_or(0.0, |(lo, hi)| hi - lo)
    }

    pub fn mean_density_in_range(&self) -> f64 {
        let rows: Vec<&DepthRow> = self.rows.iter().filter(|r| self.contains(r.z_true)).collect();
        if rows.is_empty() {
            return 0.0;
        }
        rows.iter().map(|r| r.density).sum::<f64>() / rows.len() as f64
    }

    fn contains(&self, z: f64) -> bool {
        self.working_range.is_some_and(|(lo, hi)| lo <= z && z <= hi)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["z_true", "mae", "density", "wr_flag"])?;
        for r in &self.rows {
            out.write_record([
                format!("{:.4}", r.z_true),
                format!("{:.6}", r.mae),
                format!("{:.6}", r.density),
                (self.contains(r.z_true) as u8).to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "confidence metric: {}", self.metric.name());
        if let Some(sp) = self.sparsity {
            let _ = writeln!(s, "sparsity: {sp}%");
        }
        let _ = writeln!(s, "final loss: {:.6} m", self.final_loss);
        match self.working_range {
            Some((lo, hi)) => {
                let _ = writeln!(
                    s,
                    "working range: {lo:.2} - {hi:.2} m ({:.2} m), mean density {:.1}%",
                    hi - lo,
                    100.0 * self.mean_density_in_range()
                );
            }
            None => {
                let _ = writeln!(s, "working range: empty");
            }
        }
        let _ = writeln!(s, "\nzone  scale  a             b             c_thresh");
        for (i, z) in self.params.zones.iter().enumerate() {
            for n in 0..self.params.n_scales {
                let _ = writeln!(s, "{i:>4}  {n:>5}  {:>12.5e}  {:>12.5e}  {:.3e}", z.a[n], z.b[n], z.c_thresh);
            }
        }
        let _ = writeln!(s, "omega: {:?}", self.params.omega);
        let _ = writeln!(s, "\nz_true  mae       density");
        for r in &self.rows {
            let _ = writeln!(s, "{:.2}    {:.5}  {:.4}{}", r.z_true, r.mae, r.density, if self.contains(r.z_true) { "  *" } else { "" });
        }
        s
    }

    pub fn save(&self, csv_path: impl AsRef<Path>, text_path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(csv_path)?)?;
        std::fs::write(text_path, self.to_text())?;
        Ok(())
    }
}

/// Longest contiguous run of in-range rows, widest first, nearest first on
/// ties. Rows must be sorted by depth.
pub fn working_range(rows: &[DepthRow]) -> Option<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    let mut start: Option<usize> = None;
    for i in 0..=rows.len() {
        let ok = i < rows.len() && rows[i].in_range;
        match (ok, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let cand = (rows[s].z_true, rows[i - 1].z_true);
                if best.is_none_or(|b| cand.1 - cand.0 > b.1 - b.0) {
                    best = Some(cand);
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

/// Per-item depth and confidence under one metric, reused across
/// threshold trials.
struct Evaluated {
    z: Vec<f64>,
    conf: Vec<f64>,
    zones: Vec<u8>,
    interior: Vec<usize>,
}

fn interior(width: usize, height: usize, border: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for y in border..height.saturating_sub(border) {
        for x in border..width.saturating_sub(border) {
            out.push(y * width + x);
        }
    }
    out
}

fn evaluate_items(set: &CalibSet, params: &CalibrationParams, metric: ConfidenceMetric, border: usize) -> Vec<Evaluated> {
    set.items
        .iter()
        .map(|it| {
            let (z, conf) = combine_with_metric(&it.features, params, metric);
            Evaluated {
                z: z.data,
                conf: conf.data,
                zones: it.features.zones.clone(),
                interior: interior(it.features.width, it.features.height, border),
            }
        })
        .collect()
}

fn row_for(ev: &Evaluated, z_true: f64, params: &CalibrationParams, sparsity: Option<f64>) -> DepthRow {
    let valid: Vec<usize> = match sparsity {
        None => ev
            .interior
            .iter()
            .copied()
            .filter(|&i| {
                let zp = &params.zones[ev.zones[i] as usize];
                let (z, c) = (ev.z[i], ev.conf[i]);
                z.is_finite() && c.is_finite() && c >= zp.c_thresh && zp.z_min < z && z < zp.z_max
            })
            .collect(),
        Some(sp) => {
            let mut idx: Vec<usize> =
                ev.interior.iter().copied().filter(|&i| ev.z[i].is_finite() && ev.conf[i].is_finite()).collect();
            let keep = ((1.0 - sp / 100.0) * idx.len() as f64).ceil() as usize;
            idx.sort_by(|&p, &q| ev.conf[q].total_cmp(&ev.conf[p]).then(p.cmp(&q)));
            idx.truncate(keep);
            idx
        }
    };
    let density = valid.len() as f64 / ev.interior.len().max(1) as f64;
    let mae = if valid.is_empty() {
        f64::INFINITY
    } else {
        valid.iter().map(|&i| (ev.z[i] - z_true).abs()).sum::<f64>() / valid.len() as f64
    };
    DepthRow {
        z_true,
        mae,
        density,
        in_range: density >= DENSITY_FLOOR && mae < REL_ERROR * z_true,
    }
}

fn report_from(
    evs: &[Evaluated],
    set: &CalibSet,
    params: &CalibrationParams,
    metric: ConfidenceMetric,
    sparsity: Option<f64>,
    final_loss: f64,
) -> CalibReport {
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.depths[a].total_cmp(&set.depths[b]));
    let rows: Vec<DepthRow> = order.iter().map(|&k| row_for(&evs[k], set.depths[k], params, sparsity)).collect();
    CalibReport {
        final_loss,
        metric,
        sparsity,
        working_range: working_range(&rows),
        rows,
        params: params.clone(),
    }
}

/// Per-depth MAE and density. With `sparsity` (a percentage) each image
/// keeps only its most confident `100 - sparsity` percent of pixels and the
/// zone thresholds are ignored. Pixels within the loss border are excluded.
pub fn evaluate(
    set: &CalibSet,
    params: &CalibrationParams,
    metric: ConfidenceMetric,
    sparsity: Option<f64>,
) -> CalibReport {
    let cfg = LossConfig {
        metric,
        ..LossConfig::default()
    };
    let loss = crate::reference::masked_mae(&set.items, params, &cfg).loss;
    let evs = evaluate_items(set, params, metric, cfg.border);
    report_from(&evs, set, params, metric, sparsity, loss)
}

/// Log-uniform threshold ladder across zones, scaled by one factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThresholdLadder {
    pub start: f64,
    pub end: f64,
    /// Search interval for `log10` of the scale factor.
    pub log10_factor_range: (f64, f64),
    pub grid_points: usize,
    pub golden_iters: usize,
}

impl Default for ThresholdLadder {
    fn default() -> Self {
        ThresholdLadder {
            start: 1e-7,
            end: 2e-5,
            log10_factor_range: (-8.0, 8.0),
            grid_points: 65,
            golden_iters: 30,
        }
    }
}

impl ThresholdLadder {
    pub fn thresholds(&self, log10_factor: f64) -> Vec<f64> {
        let f = 10f64.powf(log10_factor);
        (0..N_ZONES)
            .map(|z| f * self.start * (self.end / self.start).powf(z as f64 / (N_ZONES - 1) as f64))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdOutcome {
    pub params: CalibrationParams,
    pub log10_factor: f64,
    pub report: CalibReport,
}

fn with_thresholds(params: &CalibrationParams, t: &[f64]) -> CalibrationParams {
    let mut p = params.clone();
    for (z, &c) in p.zones.iter_mut().zip(t) {
        z.c_thresh = c;
    }
    p
}

/// Picks the ladder scale that maximizes the working range, breaking ties
/// toward higher density. Grid scan over the factor range, then a golden
/// section refinement around the best grid point.
pub fn select_thresholds(set: &CalibSet, params: &CalibrationParams, ladder: &ThresholdLadder) -> Result<ThresholdOutcome> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let cfg = LossConfig::default();
    let evs = evaluate_items(set, params, ConfidenceMetric::VW, cfg.border);
    let loss = crate::reference::masked_mae(&set.items, params, &cfg).loss;
    let score = |lf: f64| {
        let p = with_thresholds(params, &ladder.thresholds(lf));
        let r = report_from(&evs, set, &p, ConfidenceMetric::VW, None, loss);
        (r.working_range_width() + 1e-3 * r.mean_density_in_range(), r)
    };
    let (lo, hi) = ladder.log10_factor_range;
    let n = ladder.grid_points.max(2);
    let step = (hi - lo) / (n - 1) as f64;
    let mut best_lf = lo;
    let mut best = f64::NEG_INFINITY;
    for k in 0..n {
        let lf = lo + k as f64 * step;
        let s = score(lf).0;
        if s > best {
            best = s;
            best_lf = lf;
        }
    }
    let (mut a, mut b) = ((best_lf - step).max(lo), (best_lf + step).min(hi));
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (score(x1).0, score(x2).0);
    for _ in 0..ladder.golden_iters {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = score(x1).0;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = score(x2).0;
        }
    }
    for (x, f) in [(x1, f1), (x2, f2)] {
        if f > best {
            best = f;
            best_lf = x;
        }
    }
    let (_, report) = score(best_lf);
    Ok(ThresholdOutcome {
        params: report.params.clone(),
        log10_factor: best_lf,
        report,
    })
}

/// Structural template for a calibration run.
pub fn template(width: usize, height: usize, n_scales: usize, derivatives: bool) -> CalibrationParams {
    CalibrationParams::uniform(width, height, n_scales, derivatives, -1.0, 1.0)
}

/// Everything a full calibration produces.
#[derive(Clone, Debug)]
pub struct Calibration {
    pub params: CalibrationParams,
    pub history: Vec<f64>,
    pub log10_factor: f64,
    pub report: CalibReport,
}

/// Features, thin-lens init, Adam, then thresholds.
pub fn calibrate(
    data: &[DatasetItem],
    optics: &OpticalConfig,
    n_scales: usize,
    derivatives: bool,
    opt: &OptimizeConfig,
    ladder: &ThresholdLadder,
) -> Result<Calibration> {
    let first = data.first().ok_or(Error::EmptyDataset)?;
    let tpl = template(first.i1.width, first.i1.height, n_scales, derivatives);
    let set = CalibSet::build(data, &tpl)?;
    let init = physical_init(&set, optics, &tpl);
    let out = optimize(&set, &init, opt)?;
    let th = select_thresholds(&set, &out.params, ladder)?;
    let mut report = th.report;
    report.final_loss = *out.history.last().unwrap_or(&f64::NAN);
    Ok(Calibration {
        params: th.params,
        history: out.history,
        log10_factor: th.log10_factor,
        report,
    })
}
