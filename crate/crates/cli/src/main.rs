use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use dfdd::calib::{self, CalibSet, OptimizeConfig, ThresholdLadder};
use dfdd::costmodel;
use dfdd::image::load_pgm;
use dfdd::numerics::oracle;
use dfdd::pipeline::{run_pipeline, CalibrationParams, Engine, Numerics};
use dfdd::reference::ConfidenceMetric;
use dfdd::synth::{self, OpticalConfig, TextureSpec};

#[derive(Parser)]
#[command(name = "dfdd", version, about = "Depth from differential defocus: synthesis, calibration, inference and cost reports")]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Render a plane sweep of defocused pairs.
    Synth(SynthArgs),
    /// Fit zone parameters and confidence thresholds to a sweep.
    Calibrate(CalibrateArgs),
    /// Compute a depth map from one image pair.
    Depth(DepthArgs),
    /// Per-depth MAE and density of a parameter file on a sweep.
    Eval(EvalArgs),
    /// FLOP and line-buffer tables.
    Cost(CostArgs),
    /// Compare the binary16 units against the wide-precision oracle.
    NumericsSelftest(SelftestArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Explicit depths in metres, comma separated. Overrides the sweep.
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.24)]
    start: f64,
    #[arg(long, default_value_t = 1.36)]
    end: f64,
    #[arg(long, default_value_t = 0.02)]
    step: f64,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    /// Sensor noise standard deviation in 8-bit units.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Focus shift at the corner in dioptres.
    #[arg(long, default_value_t = 0.0)]
    field_curvature: f64,
}

#[derive(Args)]
struct StructureArgs {
    #[arg(long, default_value_t = 2)]
    scales: usize,
    #[arg(long)]
    no_derivatives: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    structure: StructureArgs,
    #[arg(long, default_value_t = 100)]
    iters: usize,
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
}

#[derive(Args)]
struct DepthArgs {
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    i1: PathBuf,
    #[arg(long)]
    i2: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "streaming")]
    engine: String,
    #[arg(long, default_value = "half")]
    numerics: String,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// vw, w2 or absw.
    #[arg(long, default_value = "vw")]
    metric: String,
    /// Keep only the most confident `100 - sparsity` percent per image.
    #[arg(long)]
    sparsity: Option<f64>,
}

#[derive(Args)]
struct CostArgs {
    /// Report one configuration instead of the full tables.
    #[arg(long)]
    scales: Option<usize>,
    #[arg(long, default_value_t = 1)]
    dxdy: u8,
    /// Also audit an instrumented streaming run on a random frame.
    #[arg(long)]
    audit: bool,
    /// Write the tables to `cost.md` here as well as stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 1_000_000)]
    pairs: u64,
}

/// An error the user can fix: bad paths, bad files, bad values.
#[derive(Debug)]
struct DataError(String);

impl std::fmt::Display for DataError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for DataError {}

fn data_err(msg: impl Into<String>) -> anyhow::Error {
    DataError(msg.into()).into()
}

fn metric_from(s: &str) -> anyhow::Result<ConfidenceMetric> {
    ConfidenceMetric::ALL
        .into_iter()
        .find(|m| m.name().eq_ignore_ascii_case(s))
        .ok_or_else(|| data_err(format!("unknown confidence metric {s}; expected vw, w2 or absw")))
}

fn load_optics(dir: &Path) -> anyhow::Result<OpticalConfig> {
    let path = dir.join("optics.json");
    if !path.exists() {
        return Ok(OpticalConfig::default());
    }
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

fn cmd_synth(a: &SynthArgs, seed: u64) -> anyhow::Result<()> {
    let mut optics = OpticalConfig {
        noise_sigma: a.noise,
        field_curvature: a.field_curvature,
        ..OpticalConfig::default()
    };
    optics.width = a.width.unwrap_or(optics.width);
    optics.height = a.height.unwrap_or(optics.height);
    let depths = match &a.depths {
        Some(d) => d.clone(),
        None => {
            if !(a.step > 0.0 && a.end > a.start && a.start > 0.0) {
                return Err(data_err("need 0 < start < end and step > 0"));
            }
            synth::depth_sweep(a.start, a.end, a.step)
        }
    };
    let texture = TextureSpec {
        seed,
        ..TextureSpec::default()
    };
    let items = synth::make_dataset(&optics, &depths, &texture, seed)?;
    synth::save_dataset(&items, &a.out)?;
    synth::save_config(&optics, a.out.join("optics.json"))?;
    println!("wrote {} pairs to {}", items.len(), a.out.display());
    Ok(())
}

fn cmd_calibrate(a: &CalibrateArgs) -> anyhow::Result<()> {
    let data = synth::load_dataset(&a.data).with_context(|| format!("reading dataset {}", a.data.display()))?;
    let optics = load_optics(&a.data)?;
    let opt = OptimizeConfig {
        iters: a.iters,
        lr: a.lr,
        ..OptimizeConfig::default()
    };
    let c = calib::calibrate(
        &data,
        &optics,
        a.structure.scales,
        !a.structure.no_derivatives,
        &opt,
        &ThresholdLadder::default(),
    )?;
    std::fs::create_dir_all(&a.out)?;
    c.params.save(a.out.join("params.json"))?;
    c.report.save(a.out.join("report.csv"), a.out.join("report.txt"))?;
    let history: String = std::iter::once("iteration,loss\n".to_string())
        .chain(c.history.iter().enumerate().map(|(i, l)| format!("{i},{l:.9}\n")))
        .collect();
    std::fs::write(a.out.join("loss.csv"), history)?;
    match c.report.working_range {
        Some((lo, hi)) => println!("loss {:.5} m, working range {lo:.2}-{hi:.2} m", c.report.final_loss),
        None => println!("loss {:.5} m, working range empty", c.report.final_loss),
    }
    Ok(())
}

fn cmd_depth(a: &DepthArgs) -> anyhow::Result<()> {
    let engine: Engine = a.engine.parse().map_err(|e| data_err(format!("{e}")))?;
    let numerics: Numerics = a.numerics.parse().map_err(|e| data_err(format!("{e}")))?;
    let params = CalibrationParams::load(&a.params).with_context(|| format!("reading {}", a.params.display()))?;
    let i1 = load_pgm(&a.i1).with_context(|| format!("reading {}", a.i1.display()))?;
    let i2 = load_pgm(&a.i2).with_context(|| format!("reading {}", a.i2.display()))?;
    let map = run_pipeline(&i1, &i2, &params, engine, numerics)?;
    std::fs::create_dir_all(&a.out)?;
    map.save(a.out.join("depth.pgm"), a.out.join("depth.csv"))?;
    println!(
        "density {:.2}%, mean confidence {:.6e}",
        100.0 * map.density(),
        map.mean_valid_confidence()
    );
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<()> {
    let metric = metric_from(&a.metric)?;
    if let Some(s) = a.sparsity {
        if !(0.0..100.0).contains(&s) {
            return Err(data_err("sparsity must be in [0, 100)"));
        }
    }
    let params = CalibrationParams::load(&a.params).with_context(|| format!("reading {}", a.params.display()))?;
    let data = synth::load_dataset(&a.data).with_context(|| format!("reading dataset {}", a.data.display()))?;
    let set = CalibSet::build(&data, &params)?;
    let report = calib::evaluate(&set, &params, metric, a.sparsity);
    std::fs::create_dir_all(&a.out)?;
    report.save(a.out.join("eval.csv"), a.out.join("eval.txt"))?;
    match report.working_range {
        Some((lo, hi)) => println!("working range {lo:.2}-{hi:.2} m ({:.2} m)", hi - lo),
        None => println!("working range empty"),
    }
    Ok(())
}

fn cmd_cost(a: &CostArgs, seed: u64) -> anyhow::Result<()> {
    let mut text = String::new();
    match a.scales {
        Some(n) => {
            if n == 0 || a.dxdy > 1 {
                return Err(data_err("need --scales >= 1 and --dxdy 0 or 1"));
            }
            let d = a.dxdy == 1;
            let f = costmodel::pipeline_flops(n, d);
            let l = costmodel::pipeline_lines(n, d);
            text.push_str(&format!(
                "N = {n}, DX_DY_ENABLE = {}\n\n| Adders | True Mult. | Easy Mult. | Dividers | Total FLOPs | Scale Buffers | Latency Buffers | Total Buffers |\n|---|---|---|---|---|---|---|---|\n| {} | {} | {} | {} | {} | {} | {} | {} |\n",
                a.dxdy,
                f.adders,
                f.true_mults,
                f.easy_mults,
                f.dividers,
                f.total_flops(),
                l.scale_buffer_lines,
                l.latency_buffer_lines,
                l.total_lines()
            ));
        }
        None => {
            text.push_str("## Per-operation FLOPs\n\n");
            text.push_str(&costmodel::op_table_markdown(1));
            text.push_str("\n## Aggregate FLOPs per pixel\n\n");
            text.push_str(&costmodel::flops_table_markdown(3));
            text.push_str("\n## Buffered lines\n\n");
            text.push_str(&costmodel::lines_table_markdown(3));
        }
    }
    if a.audit {
        let n = a.scales.unwrap_or(2);
        if n > 2 {
            return Err(data_err("the streaming engine instantiates 1 or 2 scales"));
        }
        let (w, h) = (64, 48);
        let frame = |k: u64| {
            let spec = TextureSpec {
                seed: seed.wrapping_add(k),
                ..TextureSpec::default()
            };
            synth::make_texture(w, h, &spec).map(|v| v.round().clamp(0.0, 255.0) as u8)
        };
        let (i1, i2) = (frame(0), frame(1));
        let p = CalibrationParams::uniform(w, h, n, a.dxdy == 1, -1.0, 1.0);
        let audit = costmodel::audit(&i1, &i2, &p)?;
        text.push('\n');
        text.push_str(&audit.to_markdown());
        if !audit.mismatches().is_empty() {
            print!("{text}");
            bail!("audit found mismatches");
        }
    }
    print!("{text}");
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("cost.md"), &text)?;
    }
    Ok(())
}

fn cmd_selftest(a: &SelftestArgs, seed: u64) -> anyhow::Result<()> {
    let r = oracle::sweep(a.pairs, seed);
    println!(
        "{} operand pairs: add {} mismatches, mul {} mismatches, div {} mismatches",
        r.pairs, r.add_mismatches, r.mul_mismatches, r.div_mismatches
    );
    if r.total_mismatches() > 0 {
        bail!("binary16 units disagree with the oracle");
    }
    Ok(())
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    match &cli.cmd {
        Cmd::Synth(a) => cmd_synth(a, cli.seed),
        Cmd::Calibrate(a) => cmd_calibrate(a),
        Cmd::Depth(a) => cmd_depth(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Cost(a) => cmd_cost(a, cli.seed),
        Cmd::NumericsSelftest(a) => cmd_selftest(a, cli.seed),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<DataError>() || cause.is::<std::io::Error>() {
            return 3;
        }
        if let Some(d) = cause.downcast_ref::<dfdd::Error>() {
            return match d {
                dfdd::Error::Io(_)
                | dfdd::Error::Json(_)
                | dfdd::Error::Csv(_)
                | dfdd::Error::Format(_)
                | dfdd::Error::InvalidParams(_)
                | dfdd::Error::DimensionMismatch(_)
                | dfdd::Error::ImageTooSmall { .. }
                | dfdd::Error::OddDims { .. }
                | dfdd::Error::NotDivisible { .. }
                | dfdd::Error::HomographyExceedsBuffer { .. }
                | dfdd::Error::EmptyDataset
                | dfdd::Error::UnknownOp(_)
                | dfdd::Error::BadInitialization(_) => 3,
            };
        }
    }
    4
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
        Err(_) => ExitCode::from(4),
    }
}
