//! `parc2` — single binary wiring the library's forward, verification,
//! counting, benchmark, and checkpoint capabilities.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage/format error,
//! 3 numeric (non-finite) failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use parc2::blocks::{
    adapt_to_resolution, build_model, count_params_and_macs, model_forward, reference_counts,
    Model, ModelConfig, Variant,
};
use parc2::checkpoint::{checkpoint_load, checkpoint_save, input_load};
use parc2::perf::{
    bench, reparam_inference_mode, reports_to_csv, reports_to_json, BenchOp, BenchReport, ExecMode,
};
use parc2::tensor::{random_normal, FeatureMap, Matrix};
use parc2::verify::{run_suite, Suite, SuiteReport};
use parc2::Rng;

#[derive(Parser)]
#[command(
    name = "parc2",
    version,
    about = "Oversized-kernel convolution model toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a forward pass and write logits as CSV (row per batch item).
    Forward(ForwardArgs),
    /// Build a seeded model and save it as a checkpoint.
    Init(InitArgs),
    /// Run verification suites with fixed seeds.
    Check(CheckArgs),
    /// Enumerate parameters and multiply-accumulates.
    Count(CountArgs),
    /// Time a convolution path (output verified before timing).
    Bench(BenchArgs),
    /// Rebind a checkpoint's oversized kernels to a new resolution.
    Resize(ResizeArgs),
}

#[derive(Args)]
struct ModelSelection {
    /// Named variant: XT, T, S, or B.
    #[arg(long)]
    variant: Option<String>,
    /// Explicit per-stage channels, e.g. 48,96,192,320.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    channels: Option<Vec<usize>>,
    /// Explicit per-stage block counts, e.g. 3,3,9,2.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    blocks: Option<Vec<usize>>,
    /// Number of output classes.
    #[arg(long, default_value_t = 1000)]
    num_classes: usize,
}

impl ModelSelection {
    fn config(&self, input_size: (usize, usize)) -> Result<ModelConfig> {
        let mut cfg = match (&self.variant, &self.channels, &self.blocks) {
            (Some(name), None, None) => {
                let v = Variant::from_name(name)
                    .ok_or_else(|| anyhow!("unknown variant {name:?} (use XT, T, S, or B)"))?;
                v.config(input_size)?
            }
            (None, Some(ch), Some(bl)) => {
                let channels: [usize; 4] = ch.as_slice().try_into().expect("clap enforces 4");
                let blocks: [usize; 4] = bl.as_slice().try_into().expect("clap enforces 4");
                ModelConfig::new(channels, blocks, input_size)?
            }
            _ => bail!("select a model with --variant or with both --channels and --blocks"),
        };
        cfg.num_classes = self.num_classes;
        Ok(cfg)
    }
}

#[derive(Args)]
struct ForwardArgs {
    #[command(flatten)]
    model: ModelSelection,
    /// `random:NxCxHxW` (seeded) or a path to a saved input tensor file.
    #[arg(long)]
    input: String,
    /// Seed for weights (without --checkpoint) and random inputs.
    #[arg(long)]
    seed: Option<u64>,
    /// Load weights from this checkpoint instead of seeding them.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Run the reparameterized (fused-kernel) inference path.
    #[arg(long)]
    fused: bool,
    /// Logits CSV destination.
    #[arg(long, default_value = "logits.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct InitArgs {
    #[command(flatten)]
    model: ModelSelection,
    /// Input resolution the oversized kernels bind to, e.g. 224 or 224x224.
    #[arg(long, default_value = "224")]
    input_size: String,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    /// oracle | grad | commute | reparam | shift | rf | all
    #[arg(long, default_value = "all")]
    suite: String,
    /// Write the full machine-readable report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct CountArgs {
    #[command(flatten)]
    model: ModelSelection,
    /// Resolution for the MAC accounting, e.g. 224 or 224x224.
    #[arg(long, default_value = "224")]
    input_size: String,
    /// Also write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Comma-separated ops: separable-fast, separable-naive, dense-fast,
    /// dense-naive.
    #[arg(long, value_delimiter = ',', required = true)]
    op: Vec<String>,
    /// Input shape NxCxHxW; kernels bind to HxW.
    #[arg(long)]
    shape: String,
    #[arg(long)]
    iters: usize,
    #[arg(long, default_value_t = 3)]
    warmup: usize,
    #[arg(long)]
    seed: u64,
    /// Time the parallel fast path instead of the single-threaded default.
    #[arg(long)]
    parallel: bool,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct ResizeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Target resolution, e.g. 160 or 160x160 (multiples of 32).
    #[arg(long)]
    to: String,
    #[arg(long)]
    out: PathBuf,
}

fn parse_hw(s: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = s.split('x').collect();
    match parts.as_slice() {
        [one] => {
            let v: usize = one.parse().context("size must be an integer")?;
            Ok((v, v))
        }
        [h, w] => Ok((
            h.parse().context("height must be an integer")?,
            w.parse().context("width must be an integer")?,
        )),
        _ => bail!("expected SIZE or HxW, got {s:?}"),
    }
}

fn parse_shape(s: &str) -> Result<(usize, usize, usize, usize)> {
    let parts: Vec<usize> = s
        .split('x')
        .map(|p| p.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("bad shape {s:?}, expected NxCxHxW"))?;
    if parts.len() != 4 {
        bail!("bad shape {s:?}, expected NxCxHxW");
    }
    Ok((parts[0], parts[1], parts[2], parts[3]))
}

/// Input RNG stream is keyed off the user seed but independent of how many
/// draws weight initialization consumed.
fn input_rng(seed: u64) -> Rng {
    Rng::new(seed ^ 0x9E37_79B9_7F4A_7C15)
}

fn load_input(source: &str, seed: Option<u64>) -> Result<FeatureMap<f32>> {
    if let Some(dims) = source.strip_prefix("random:") {
        let shape = parse_shape(dims)?;
        let seed = seed.ok_or_else(|| anyhow!("--seed is required for random inputs"))?;
        Ok(random_normal(shape, &mut input_rng(seed), 1.0))
    } else {
        let x = input_load(Path::new(source))?;
        if !x.is_all_finite() {
            return Err(parc2::Error::NonFinite(format!("input tensor {source}")).into());
        }
        Ok(x)
    }
}

fn write_logits_csv(path: &Path, logits: &Matrix<f32>) -> Result<()> {
    let mut out = String::new();
    for r in 0..logits.rows() {
        let row: Vec<String> = logits.row(r).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn top_indices(row: &[f32], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|a, b| {
        row[*b]
            .partial_cmp(&row[*a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx.truncate(k);
    idx
}

fn cmd_forward(args: ForwardArgs) -> Result<()> {
    let input = load_input(&args.input, args.seed)?;
    let (_, _, h, w) = input.shape();

    let model: Model = match &args.checkpoint {
        Some(path) => {
            let model = checkpoint_load(path)?;
            if let Some(name) = &args.model.variant {
                if model.config.variant.as_deref() != Some(name.to_ascii_uppercase().as_str()) {
                    bail!(
                        "checkpoint is {:?}, but --variant {name} was requested",
                        model.config.variant
                    );
                }
            }
            if (h, w) != model.config.input_size {
                bail!(
                    "input {}x{} does not match the checkpoint's bound size {}x{}; \
                     run `parc2 resize` first",
                    h,
                    w,
                    model.config.input_size.0,
                    model.config.input_size.1
                );
            }
            model
        }
        None => {
            let seed = args
                .seed
                .ok_or_else(|| anyhow!("--seed is required when no checkpoint provides weights"))?;
            let cfg = args.model.config((h, w))?;
            build_model(&cfg, &mut Rng::new(seed))?
        }
    };

    let model = if args.fused {
        reparam_inference_mode(&model)?
    } else {
        model
    };

    let logits = model_forward(&model, &input)?;
    write_logits_csv(&args.out, &logits)?;
    println!(
        "forward: variant={} input={} fused={} -> {} ({} rows x {} classes)",
        model.config.variant.as_deref().unwrap_or("custom"),
        args.input,
        args.fused,
        args.out.display(),
        logits.rows(),
        logits.cols()
    );
    for r in 0..logits.rows() {
        let top = top_indices(logits.row(r), 5);
        println!("row {r}: argmax {} top5 {:?}", top[0], top);
    }
    Ok(())
}

fn cmd_init(args: InitArgs) -> Result<()> {
    let size = parse_hw(&args.input_size)?;
    let cfg = args.model.config(size)?;
    let model = build_model(&cfg, &mut Rng::new(args.seed))?;
    checkpoint_save(&model, &args.out)?;
    println!(
        "init: variant={} input_size={}x{} seed={} params={} -> {}",
        cfg.variant.as_deref().unwrap_or("custom"),
        size.0,
        size.1,
        args.seed,
        model.num_params(),
        args.out.display()
    );
    Ok(())
}

fn cmd_check(args: CheckArgs) -> Result<bool> {
    let suites: Vec<Suite> = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![Suite::from_name(&args.suite).ok_or_else(|| {
            anyhow!(
                "unknown suite {:?} (oracle, grad, commute, reparam, shift, rf, all)",
                args.suite
            )
        })?]
    };
    let mut reports: Vec<SuiteReport> = Vec::new();
    let mut all_pass = true;
    for suite in suites {
        let report = run_suite(suite)?;
        println!(
            "suite {}: {} ({} cases, {} failed)",
            report.suite,
            if report.pass { "PASS" } else { "FAIL" },
            report.cases.len(),
            report.failed
        );
        for case in report.cases.iter().filter(|c| !c.pass) {
            println!(
                "  FAIL {} metric={:.3e} tolerance={:.3e} argmax={:?}",
                case.id, case.metric, case.tolerance, case.argmax_location
            );
        }
        all_pass &= report.pass;
        reports.push(report);
    }
    if let Some(path) = &args.report {
        std::fs::write(path, serde_json::to_string_pretty(&reports)?)?;
        println!("report written to {}", path.display());
    }
    Ok(all_pass)
}

fn cmd_count(args: CountArgs) -> Result<()> {
    let size = parse_hw(&args.input_size)?;
    let cfg = args.model.config(size)?;
    let report = count_params_and_macs(&cfg)?;
    println!(
        "counts for {} at {}x{}:",
        cfg.variant.as_deref().unwrap_or("custom"),
        size.0,
        size.1
    );
    println!("{:<28}{:>16}{:>18}", "module", "params", "macs");
    println!(
        "{:<28}{:>16}{:>18}",
        "stem", report.stem.params, report.stem.macs
    );
    for (i, stage) in report.stages.iter().enumerate() {
        println!(
            "{:<28}{:>16}{:>18}",
            format!(
                "stage{} ({} x C{} @{}x{})",
                i, stage.blocks, stage.channels, stage.feature.0, stage.feature.1
            ),
            stage.total.params,
            stage.total.macs
        );
        println!(
            "{:<28}{:>16}{:>18}",
            format!("  per-block spatial"),
            stage.per_block.spatial.params,
            stage.per_block.spatial.macs
        );
        println!(
            "{:<28}{:>16}{:>18}",
            format!("  per-block channel-bgu"),
            stage.per_block.channel_bgu.params,
            stage.per_block.channel_bgu.macs
        );
        if i < report.downsamples.len() {
            println!(
                "{:<28}{:>16}{:>18}",
                format!("downsample{i}"),
                report.downsamples[i].params,
                report.downsamples[i].macs
            );
        }
    }
    println!(
        "{:<28}{:>16}{:>18}",
        "head", report.head.params, report.head.macs
    );
    println!(
        "{:<28}{:>16}{:>18}",
        "total", report.total.params, report.total.macs
    );
    println!(
        "total: {:.3}M params, {:.3}G macs",
        report.params_millions(),
        report.macs_billions()
    );
    if let Some(name) = &cfg.variant {
        if size == (224, 224) {
            let v = Variant::from_name(name).expect("validated above");
            let r = reference_counts(v);
            println!(
                "reference {}: {:.1}M / {:.1}G -> delta {:+.2}% params, {:+.2}% macs",
                name,
                r.params_m,
                r.macs_g,
                100.0 * (report.params_millions() - r.params_m) / r.params_m,
                100.0 * (report.macs_billions() - r.macs_g) / r.macs_g
            );
        }
    }
    if let Some(path) = &args.json {
        std::fs::write(path, serde_json::to_string_pretty(&report)?)?;
    }
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let shape = parse_shape(&args.shape)?;
    let mode = if args.parallel {
        ExecMode::Parallel
    } else {
        ExecMode::Sequential
    };
    let mut reports: Vec<BenchReport> = Vec::new();
    for op_name in &args.op {
        let op = BenchOp::from_label(op_name).ok_or_else(|| {
            anyhow!(
                "unknown op {op_name:?} (separable-fast, separable-naive, dense-fast, dense-naive)"
            )
        })?;
        let mut rng = Rng::new(args.seed);
        let report = bench(op, shape, args.warmup, args.iters, &mut rng, mode)?;
        println!(
            "{}: path={} median={}ns p10={}ns p90={}ns verified={}",
            report.label,
            report.path,
            report.median_ns,
            report.p10_ns,
            report.p90_ns,
            report.verified
        );
        reports.push(report);
    }
    if let Some(path) = &args.csv {
        std::fs::write(path, reports_to_csv(&reports))?;
    }
    if let Some(path) = &args.json {
        std::fs::write(path, reports_to_json(&reports)?)?;
    }
    Ok(())
}

fn cmd_resize(args: ResizeArgs) -> Result<()> {
    let (h, w) = parse_hw(&args.to)?;
    let model = checkpoint_load(&args.checkpoint)?;
    let resized = adapt_to_resolution(&model, h, w)?;
    checkpoint_save(&resized, &args.out)?;
    println!(
        "resize: {} ({}x{}) -> {} ({}x{})",
        args.checkpoint.display(),
        model.config.input_size.0,
        model.config.input_size.1,
        args.out.display(),
        h,
        w
    );
    Ok(())
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<parc2::Error>() {
        Some(parc2::Error::NonFinite(_)) => 3,
        Some(parc2::Error::Verification(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("PARC2_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) => parc2::configure_thread_cap(n),
            Err(_) => {
                eprintln!("error: PARC2_THREADS must be a non-negative integer");
                return ExitCode::from(2);
            }
        }
    }
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Forward(args) => cmd_forward(args).map(|()| 0u8),
        Command::Init(args) => cmd_init(args).map(|()| 0u8),
        Command::Check(args) => cmd_check(args).map(|pass| if pass { 0u8 } else { 1u8 }),
        Command::Count(args) => cmd_count(args).map(|()| 0u8),
        Command::Bench(args) => cmd_bench(args).map(|()| 0u8),
        Command::Resize(args) => cmd_resize(args).map(|()| 0u8),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
