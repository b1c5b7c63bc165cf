//! Command-line front end for `layerrd`.
//!
//! Every command writes its outputs and a `<command>.manifest.json` into
//! `--out-dir`. Exit status is 0 on success, 1 when a verification fails
//! and 2 on bad input or usage.

pub mod manifest;
pub mod sweep;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use layerrd::io::{self, read_json};
use layerrd::theorem::{check_theorem1, check_theorem2};
use layerrd::{
    bd_quality, bd_rate, lagrangian_select, pullback_distortion, random_pipeline,
    trace_cross_curve, trace_rd_curve, DistortionKind, DistortionMatrix, PipelineSizes,
    SolverConfig, TheoremId,
};
use serde::Deserialize;

use crate::manifest::Recorder;
use crate::sweep::{run_sweep, summary_csv, summary_table, KindChoice, SweepParams};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_INPUT: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "layerrd",
    version,
    about = "Rate-distortion analysis of layered inference pipelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Trace a rate-distortion curve and write it as CSV.
    Solve(SolveArgs),
    /// Check one of the layer-depth rate bounds on a pipeline.
    Verify(VerifyArgs),
    /// Bjontegaard delta between two rate-quality curves.
    Bd(BdArgs),
    /// Pick the operating point with the lowest Lagrangian cost.
    Select(SelectArgs),
    /// Generate a random pipeline.
    Gen(GenArgs),
    /// Verify a bound on many seeded random pipelines.
    Sweep(SweepArgs),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Directory for outputs and the run manifest.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// JSON file with solver settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    beta_min: Option<f64>,
    #[arg(long)]
    beta_max: Option<f64>,
    #[arg(long)]
    beta_count: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Variable {
    X,
    Y1,
    Y2,
    Cross,
}

#[derive(Args, Debug)]
struct SolveArgs {
    variable: Variable,
    #[arg(long)]
    pipeline: PathBuf,
    /// For `y1`: use the combined downstream-branch distortion instead of
    /// the task distortion.
    #[arg(long)]
    branches: bool,
    /// For `cross`: distortion matrix JSON on Y2.
    #[arg(long)]
    d_y2: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Theorem {
    Thm1,
    Thm2,
}

impl From<Theorem> for TheoremId {
    fn from(t: Theorem) -> Self {
        match t {
            Theorem::Thm1 => TheoremId::Thm1,
            Theorem::Thm2 => TheoremId::Thm2,
        }
    }
}

#[derive(Args, Debug)]
struct VerifyArgs {
    theorem: Theorem,
    #[arg(long)]
    pipeline: PathBuf,
    /// Number of grid points.
    #[arg(long)]
    grid: Option<usize>,
    /// Verdict tolerance in bits.
    #[arg(long)]
    tol: Option<f64>,
    /// thm2: distortion matrix JSON on Y1 (default: d_y2 pulled back through g2).
    #[arg(long)]
    d_y1: Option<PathBuf>,
    /// thm2: distortion matrix JSON on Y2 (default: task distortion pulled back through h2).
    #[arg(long)]
    d_y2: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum BdKind {
    Rate,
    Quality,
}

#[derive(Args, Debug)]
struct BdArgs {
    kind: BdKind,
    #[arg(long = "ref")]
    reference: PathBuf,
    #[arg(long)]
    test: PathBuf,
    /// Quality metric name; overrides any sidecar.
    #[arg(long)]
    metric: Option<String>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SelectArgs {
    /// Operating-point CSV with header `rate,d_enh,d_base,label`.
    #[arg(long)]
    points: PathBuf,
    #[arg(long)]
    lambda: f64,
    #[arg(long)]
    w: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Alphabet sizes `x,y1,y2,t`.
    #[arg(long, default_value = "6,6,5,3")]
    sizes: PipelineSizes,
    #[arg(long, default_value = "hamming")]
    distortion: DistortionKind,
    /// Output file name inside the output directory.
    #[arg(long, default_value = "pipeline.json")]
    name: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    theorem: Theorem,
    /// Number of random pipelines.
    #[arg(long, default_value_t = 200)]
    seeds: usize,
    /// Largest alphabet sizes `x,y1,y2,t`.
    #[arg(long, default_value = "6,6,5,3")]
    sizes: PipelineSizes,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    /// Seed of the generator all cases are drawn from.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "mixed")]
    distortion: KindChoice,
    #[command(flatten)]
    common: Common,
}

/// Settings file accepted by `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    solver: SolverConfig,
    grid: Option<usize>,
    tol: Option<f64>,
}

const DEFAULT_GRID: usize = 20;
const DEFAULT_TOL: f64 = 1e-4;

struct Effective {
    solver: SolverConfig,
    grid: usize,
    tol: f64,
}

fn effective(
    common: &Common,
    grid: Option<usize>,
    tol: Option<f64>,
    rec: &mut Recorder,
) -> Result<Effective> {
    let file = match &common.config {
        Some(path) => {
            rec.input(path);
            read_json::<ConfigFile>(path)?
        }
        None => ConfigFile::default(),
    };
    let mut solver = file.solver;
    if let Some(v) = common.beta_min {
        solver.beta_min = v;
    }
    if let Some(v) = common.beta_max {
        solver.beta_max = v;
    }
    if let Some(v) = common.beta_count {
        solver.beta_count = v;
    }
    solver.validate()?;
    rec.config(&solver);
    Ok(Effective {
        solver,
        grid: grid.or(file.grid).unwrap_or(DEFAULT_GRID),
        tol: tol.or(file.tol).unwrap_or(DEFAULT_TOL),
    })
}

fn load_matrix(path: &Path, rec: &mut Recorder) -> Result<DistortionMatrix> {
    rec.input(path);
    Ok(read_json(path)?)
}

/// Parses `args` (program name first) and runs the command, printing to
/// stdout and stderr. Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let recorded: Vec<String> = argv
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    match dispatch(cli.command, &recorded) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_INPUT
        }
    }
}

fn dispatch(command: Command, argv: &[String]) -> Result<i32> {
    match command {
        Command::Solve(a) => solve(a, argv),
        Command::Verify(a) => verify(a, argv),
        Command::Bd(a) => bd(a, argv),
        Command::Select(a) => select(a, argv),
        Command::Gen(a) => gen(a, argv),
        Command::Sweep(a) => sweep_cmd(a, argv),
    }
}

fn solve(a: SolveArgs, argv: &[String]) -> Result<i32> {
    let mut rec = Recorder::start("solve", argv, &a.common.out_dir)?;
    let cfg = effective(&a.common, None, None, &mut rec)?.solver;
    rec.input(&a.pipeline);
    let pipeline = io::load_pipeline(&a.pipeline)?;
    if a.branches && a.variable != Variable::Y1 {
        bail!("--branches only applies to y1");
    }
    if a.d_y2.is_some() && a.variable != Variable::Cross {
        bail!("--d-y2 only applies to cross");
    }
    let traced = match a.variable {
        Variable::X => trace_rd_curve(pipeline.source(), &pipeline.distortion_on_x(), &cfg, "x")?,
        Variable::Y1 => {
            let d = if a.branches {
                pipeline.branch_distortion(None)?
            } else {
                pipeline.distortion_on_y1()
            };
            trace_rd_curve(
                &pipeline.y1_distribution(),
                &d,
                &cfg,
                pipeline.partition_label(),
            )?
        }
        Variable::Y2 => trace_rd_curve(
            &pipeline.y2_distribution(),
            &pipeline.distortion_on_y2(),
            &cfg,
            "y2",
        )?,
        Variable::Cross => {
            let d_y2 = a
                .d_y2
                .as_deref()
                .map(|p| load_matrix(p, &mut rec))
                .transpose()?;
            trace_cross_curve(&pipeline, d_y2.as_ref(), &cfg)?
        }
    };
    let name = format!("rd_{}.csv", format!("{:?}", a.variable).to_lowercase());
    let path = rec.output(&name);
    io::save_rd_curve(&traced.curve, &path)?;
    let pts = traced.curve.points();
    println!(
        "{} points, distortion [{}, {}], max rate {} bits -> {}",
        pts.len(),
        pts.first().map_or(0.0, |p| p.distortion),
        pts.last().map_or(0.0, |p| p.distortion),
        traced.curve.max_rate(),
        path.display()
    );
    rec.finish()?;
    Ok(EXIT_OK)
}

fn verify(a: VerifyArgs, argv: &[String]) -> Result<i32> {
    let mut rec = Recorder::start("verify", argv, &a.common.out_dir)?;
    let eff = effective(&a.common, a.grid, a.tol, &mut rec)?;
    rec.input(&a.pipeline);
    let pipeline = io::load_pipeline(&a.pipeline)?;
    let theorem: TheoremId = a.theorem.into();
    let verification = match theorem {
        TheoremId::Thm1 => {
            if a.d_y1.is_some() || a.d_y2.is_some() {
                bail!("--d-y1 and --d-y2 only apply to thm2");
            }
            check_theorem1(&pipeline, eff.grid, &eff.solver, eff.tol)?
        }
        TheoremId::Thm2 => {
            let d_y2 = match &a.d_y2 {
                Some(p) => load_matrix(p, &mut rec)?,
                None => pipeline.distortion_on_y2(),
            };
            let d_y1 = match &a.d_y1 {
                Some(p) => load_matrix(p, &mut rec)?,
                None => pullback_distortion(&d_y2, pipeline.g2())?,
            };
            check_theorem2(
                &pipeline,
                &d_y1,
                Some(&d_y2),
                eff.grid,
                &eff.solver,
                eff.tol,
            )?
        }
    };
    let report = &verification.report;
    rec.write_json(&format!("{theorem}_report.json"), report)?;
    let mut passed = report.passed();
    if let Some(ach) = &verification.achievability {
        rec.write_json(&format!("{theorem}_achievability.json"), ach)?;
        passed &= ach.holds;
    }
    println!(
        "{theorem}: max violation {:.3e} bits over {} grid points (tolerance {:e}): {}",
        report.max_violation,
        report.d_grid.len(),
        report.tolerance,
        if passed { "pass" } else { "FAIL" }
    );
    rec.finish()?;
    Ok(if passed { EXIT_OK } else { EXIT_FAIL })
}

fn bd(a: BdArgs, argv: &[String]) -> Result<i32> {
    let mut rec = Recorder::start("bd", argv, &a.out_dir)?;
    rec.input(&a.reference);
    rec.input(&a.test);
    let reference = io::load_rate_quality_curve(&a.reference, a.metric.as_deref(), None)?;
    let test = io::load_rate_quality_curve(&a.test, a.metric.as_deref(), None)?;
    let (result, name) = match a.kind {
        BdKind::Rate => (bd_rate(&reference, &test)?, "bd_rate.json"),
        BdKind::Quality => (bd_quality(&reference, &test)?, "bd_quality.json"),
    };
    rec.write_json(name, &result)?;
    match (a.kind, &result) {
        (BdKind::Rate, r) if r.bd_rate_percent.is_some() => {
            println!(
                "BD-rate {} vs {}: {}%",
                r.test_label,
                r.reference_label,
                r.bd_rate_percent.unwrap_or_default()
            )
        }
        (BdKind::Quality, r) if r.bd_quality.is_some() => println!(
            "BD-{} {} vs {}: {}",
            r.quality_metric,
            r.test_label,
            r.reference_label,
            r.bd_quality.unwrap_or_default()
        ),
        (_, r) => println!("no result: {}", r.reason.as_deref().unwrap_or("unknown")),
    }
    rec.finish()?;
    Ok(EXIT_OK)
}

fn select(a: SelectArgs, argv: &[String]) -> Result<i32> {
    let mut rec = Recorder::start("select", argv, &a.out_dir)?;
    rec.input(&a.points);
    let points = io::load_operating_points(&a.points)?;
    let chosen = lagrangian_select(&points, a.lambda, a.w)?;
    rec.write_json("selection.json", &chosen)?;
    println!(
        "point {} ({}): rate {}, d_enh {}, d_base {}, loss {}",
        chosen.index,
        chosen.point.label,
        chosen.point.rate,
        chosen.point.d_enh,
        chosen.point.d_base,
        chosen.loss
    );
    rec.finish()?;
    Ok(EXIT_OK)
}

fn gen(a: GenArgs, argv: &[String]) -> Result<i32> {
    let mut rec = Recorder::start("gen", argv, &a.out_dir)?;
    rec.seed(a.seed);
    let pipeline = random_pipeline(a.seed, a.sizes, a.distortion)?;
    let path = rec.output(&a.name);
    io::save_pipeline(&pipeline, &path)?;
    println!("{}", path.display());
    rec.finish()?;
    Ok(EXIT_OK)
}

fn sweep_cmd(a: SweepArgs, argv: &[String]) -> Result<i32> {
    let mut rec = Recorder::start("sweep", argv, &a.common.out_dir)?;
    rec.seed(a.seed);
    let eff = effective(&a.common, a.grid, a.tol, &mut rec)?;
    if a.seeds == 0 {
        bail!("--seeds must be at least 1");
    }
    let params = SweepParams {
        theorem: a.theorem.into(),
        cases: a.seeds,
        max_sizes: a.sizes,
        grid: eff.grid,
        tol: eff.tol,
        seed: a.seed,
        kinds: a.distortion,
        solver: eff.solver,
    };
    let results = run_sweep(&params)?;
    for r in &results {
        rec.write_json(&format!("cases/case_{:04}.json", r.plan.case), r)?;
    }
    let passed = results.iter().filter(|r| r.passed).count();
    let path = rec.output("sweep_summary.csv");
    std::fs::write(&path, summary_csv(&results))
        .with_context(|| format!("cannot write {}", path.display()))?;
    rec.write_json(
        "sweep_summary.json",
        &serde_json::json!({
            "theorem_id": params.theorem,
            "cases": results.len(),
            "passed": passed,
            "grid": params.grid,
            "tolerance": params.tol,
            "seed": params.seed,
            "max_sizes": params.max_sizes.to_string(),
        }),
    )?;
    let mut out = std::io::stdout().lock();
    write!(out, "{}", summary_table(&results))?;
    writeln!(out, "{passed}/{} pass", results.len())?;
    rec.finish()?;
    Ok(if passed == results.len() {
        EXIT_OK
    } else {
        EXIT_FAIL
    })
}
