use std::ffi::OsString;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use maskforge::adaption::LoraAdaptor;
use maskforge::pipeline::Selector;

use crate::backend::{Backend, BackendSpec};
use crate::config::HarnessConfig;
use crate::dataset::{
    ingest, load_targets, write_targets, DatasetSpec, MaskFormat, MaskSource, Mode,
};
use crate::report::{write_json, RefineReport, REFINE_REPORT_VERSION};
use crate::tasks;

pub const SEED_ENV: &str = "MASKFORGE_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "maskforge",
    version,
    about = "Refine coarse segmentation masks with a promptable segmenter"
)]
pub struct Cli {
    /// TOML or JSON file with `refine`, `train`, `defects`, `mock` and `scenes` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `mock:<scene file>` or `neural:<manifest>`.
    #[arg(long, global = true)]
    pub backend: Option<BackendSpec>,
    /// Seeds every random stream; falls back to $MASKFORGE_SEED, then 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refine a dataset's coarse masks.
    Refine(RefineArgs),
    /// Score predicted masks against ground truth.
    Eval(EvalArgs),
    /// Train a quality-head adaptor from coarse masks alone.
    AdaptIou(DataArgs),
    /// Fabricate coarse masks from ground truth.
    SimulateDefects(SimulateArgs),
    /// Replay golden fixtures through the neural backend.
    BackendCheck(CheckArgs),
    /// Write a seeded synthetic dataset with its mock scene file.
    SynthScenes(SynthArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub coarse: PathBuf,
    #[arg(long, value_enum)]
    pub coarse_format: Option<MaskFormat>,
    #[arg(long, value_enum, default_value = "instance")]
    pub mode: Mode,
}

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub gt_format: Option<MaskFormat>,
    /// Overrides the config's selector.
    #[arg(long)]
    pub selector: Option<Selector>,
    #[arg(long)]
    pub adaptor: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_enum)]
    pub pred_format: Option<MaskFormat>,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum)]
    pub gt_format: Option<MaskFormat>,
    #[arg(long, value_enum, default_value = "instance")]
    pub mode: Mode,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, value_enum)]
    pub gt_format: Option<MaskFormat>,
    #[arg(long, value_enum, default_value = "instance")]
    pub mode: Mode,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Fixture directory with `index.json`; defaults to `fixtures/` beside the manifest.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    pub count: u64,
    /// Skip writing defected coarse masks.
    #[arg(long)]
    pub no_coarse: bool,
}

/// Missing-but-required flags; reported like parse errors.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct RunContext {
    cfg: HarnessConfig,
    seed: u64,
    jobs: usize,
}

fn resolve(cli: &Cli) -> anyhow::Result<RunContext> {
    let cfg = match &cli.config {
        Some(p) => {
            HarnessConfig::load(p).with_context(|| format!("loading config {}", p.display()))?
        }
        None => HarnessConfig::default(),
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| usage(format!("{SEED_ENV}=`{v}` is not an integer")))?,
            Err(_) => 0,
        },
    };
    let cfg = cfg.with_seed(seed);
    Ok(RunContext {
        cfg,
        seed,
        jobs: cli.jobs,
    })
}

fn out_dir(cli: &Cli) -> anyhow::Result<&Path> {
    let out = cli
        .out
        .as_deref()
        .ok_or_else(|| usage("--out is required"))?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    Ok(out)
}

fn backend(cli: &Cli, ctx: &RunContext) -> anyhow::Result<Backend> {
    let spec = cli
        .backend
        .as_ref()
        .ok_or_else(|| usage("--backend is required"))?;
    Ok(Backend::open(spec, &ctx.cfg.mock, ctx.seed)?)
}

fn dataset(d: &DataArgs, gt: Option<(&Path, Option<MaskFormat>)>) -> anyhow::Result<DatasetSpec> {
    Ok(DatasetSpec {
        mode: d.mode,
        images: d.images.clone(),
        coarse: MaskSource::new(&d.coarse, d.coarse_format)?,
        gt: gt.map(|(p, f)| MaskSource::new(p, f)).transpose()?,
    })
}

fn refine(cli: &Cli, ctx: &RunContext, a: &RefineArgs) -> anyhow::Result<()> {
    let out = out_dir(cli)?;
    let backend = backend(cli, ctx)?;
    let mut cfg = ctx.cfg.refine.clone();
    if let Some(s) = a.selector {
        cfg.selector = s;
    }
    let adaptor = match &a.adaptor {
        Some(p) => {
            Some(LoraAdaptor::load(p).with_context(|| format!("loading adaptor {}", p.display()))?)
        }
        None => None,
    };
    if cfg.selector == Selector::Adapted && adaptor.is_none() {
        return Err(usage("selector adapted needs --adaptor"));
    }
    if cfg.selector == Selector::GtIou && a.gt.is_none() {
        return Err(usage("selector gt_iou needs --gt"));
    }
    let spec = dataset(&a.data, a.gt.as_deref().map(|p| (p, a.gt_format)))?;
    let samples = ingest(&spec)?;
    let result = tasks::refine_dataset(&samples, &backend, &cfg, adaptor.as_ref(), ctx.jobs)?;
    write_targets(&out.join("masks"), &result.targets)?;
    let report = RefineReport {
        schema_version: REFINE_REPORT_VERSION,
        mode: spec.mode,
        backend: backend.kind().to_string(),
        selector: cfg.selector.name().to_string(),
        iterations: cfg.iterations,
        seed: ctx.seed,
        targets: result.records,
        eval: result.eval,
    };
    write_json(&out.join("report.json"), &report)?;
    let refined = report.targets.iter().filter(|t| !t.passthrough).count();
    print!(
        "refined {refined} of {} targets in {} images",
        report.targets.len(),
        samples.len()
    );
    if let Some(e) = &report.eval {
        std::fs::write(out.join("report.csv"), e.to_csv())?;
        print!("; mean IoU {:.4}", e.aggregates.mean_iou);
        if let Some(c) = e.aggregates.mean_coarse_iou {
            print!(" (coarse {c:.4})");
        }
    }
    println!();
    Ok(())
}

fn eval(cli: &Cli, a: &EvalArgs) -> anyhow::Result<()> {
    let pred = load_targets(&MaskSource::new(&a.pred, a.pred_format)?, a.mode)?;
    let gt = load_targets(&MaskSource::new(&a.gt, a.gt_format)?, a.mode)?;
    let report = tasks::evaluate(&pred, &gt, a.mode)?;
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out)?;
        write_json(&out.join("report.json"), &report)?;
        std::fs::write(out.join("report.csv"), report.to_csv())?;
    }
    print!(
        "{} instances in {} images; mean IoU {:.4}, boundary IoU {:.4}",
        report.counts.instances,
        report.counts.images,
        report.aggregates.mean_iou,
        report.aggregates.mean_boundary_iou
    );
    if let Some(m) = &report.aggregates.miou {
        print!(", mIoU {:.4}", m.mean);
    }
    println!();
    Ok(())
}

fn adapt(cli: &Cli, ctx: &RunContext, a: &DataArgs) -> anyhow::Result<()> {
    let out = out_dir(cli)?;
    let backend = backend(cli, ctx)?;
    let samples = ingest(&dataset(a, None)?)?;
    let (adaptor, log, n) = tasks::adapt_iou(
        &samples,
        &backend,
        &ctx.cfg.refine,
        &ctx.cfg.train,
        ctx.jobs,
    )?;
    adaptor.save(&out.join("adaptor.json"))?;
    write_json(&out.join("train_log.json"), &log)?;
    println!(
        "trained on {n} samples for {} steps; final batch loss {:.6}",
        log.steps,
        log.losses.last().copied().unwrap_or(0.0)
    );
    Ok(())
}

fn simulate(cli: &Cli, ctx: &RunContext, a: &SimulateArgs) -> anyhow::Result<()> {
    let out = out_dir(cli)?;
    let gt: Vec<_> = load_targets(&MaskSource::new(&a.gt, a.gt_format)?, a.mode)?
        .into_iter()
        .collect();
    let coarse = tasks::simulate_dataset(&gt, &ctx.cfg.defects, ctx.jobs)?;
    write_targets(out, &coarse)?;
    println!("wrote defected masks for {} images", coarse.len());
    Ok(())
}

#[cfg(feature = "neural")]
fn check(cli: &Cli, a: &CheckArgs) -> anyhow::Result<()> {
    let Some(BackendSpec::Neural(manifest)) = &cli.backend else {
        return Err(usage("backend-check needs --backend neural:<manifest>"));
    };
    let seg = maskforge::segmenter::NeuralSegmenter::load(manifest)?;
    let dir = match &a.fixtures {
        Some(d) => d.clone(),
        None => manifest.parent().unwrap_or(Path::new(".")).join("fixtures"),
    };
    let report = maskforge::segmenter::parity_check(&seg, &dir)?;
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out)?;
        write_json(&out.join("parity.json"), &report)?;
    }
    for f in &report.fixtures {
        let worst = f.max_abs.values().copied().fold(0.0, f64::max);
        println!(
            "{} {}: max abs {worst:.3e}",
            if f.passed { "pass" } else { "FAIL" },
            f.name
        );
    }
    if !report.passed {
        bail!("parity check failed (tolerance {})", report.tolerance);
    }
    Ok(())
}

#[cfg(not(feature = "neural"))]
fn check(_cli: &Cli, _a: &CheckArgs) -> anyhow::Result<()> {
    bail!("this build has no neural backend (enable the `neural` feature)")
}

fn synth(cli: &Cli, ctx: &RunContext, a: &SynthArgs) -> anyhow::Result<()> {
    let out = out_dir(cli)?;
    let defects = (!a.no_coarse).then_some(&ctx.cfg.defects);
    tasks::synth_scenes(out, &ctx.cfg.scenes, a.count, ctx.seed, defects, ctx.jobs)?;
    println!("wrote {} scenes to {}", a.count, out.display());
    Ok(())
}

pub fn execute(cli: &Cli) -> anyhow::Result<()> {
    let ctx = resolve(cli)?;
    match &cli.command {
        Command::Refine(a) => refine(cli, &ctx, a),
        Command::Eval(a) => eval(cli, a),
        Command::AdaptIou(a) => adapt(cli, &ctx, a),
        Command::SimulateDefects(a) => simulate(cli, &ctx, a),
        Command::BackendCheck(a) => check(cli, a),
        Command::SynthScenes(a) => synth(cli, &ctx, a),
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
