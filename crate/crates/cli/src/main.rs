use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use camrank::annotation::{annotate_dirs, AnnotateOptions, RankThresholds};
use camrank::data::{synthesize, DatasetManifest, DifficultySpec};
use camrank::metrics::ScoreOptions;
use camrank::pipeline::{
    evaluate, infer, score_dirs, smoothed, train, NetPredictor, ScoredLayer, TrainConfig, SMOOTHING_WINDOW,
};
use clap::{Args, Parser, Subcommand};

/// Relative output paths resolve against this directory when it is set.
const OUT_ENV: &str = "CAMRANK_OUT";

#[derive(Parser)]
#[command(name = "camrank", version, about = "Camouflage fixation, segmentation and rank toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus.
    Synth(SynthArgs),
    /// Turn fixation sessions and instance masks into rank maps.
    Annotate(AnnotateArgs),
    /// Train a model on a corpus.
    Train(TrainArgs),
    /// Score a checkpoint on a corpus.
    Eval(EvalArgs),
    /// Run a checkpoint on images.
    Infer(InferArgs),
    /// Score directories of predicted maps against ground truth.
    Score(ScoreArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Give every shape this rank (1..=3).
    #[arg(long)]
    only_rank: Option<u8>,
    #[arg(long)]
    max_instances: Option<usize>,
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    sessions: PathBuf,
    #[arg(long)]
    masks: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Normalised-delay thresholds `low,high`.
    #[arg(long, value_parser = parse_pair)]
    thresholds: Option<(f64, f64)>,
    /// Fixed normaliser in seconds.
    #[arg(long)]
    normalizer: Option<f64>,
    /// Chebyshev radius for fixation-in-mask tests.
    #[arg(long, default_value_t = 0)]
    tolerance: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// TOML config; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory holding manifest.json.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Square network input size; rounded image size when absent.
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// An image file or a directory of .png/.jpg files.
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    size: Option<usize>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Maps are literal rank maps.
    #[arg(long, conflicts_with = "fixations")]
    ranks: bool,
    /// Ground truth holds fixation density maps.
    #[arg(long)]
    fixations: bool,
    #[arg(long)]
    report: Option<PathBuf>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected `low,high`")?;
    let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

fn output_path(given: Option<PathBuf>, default: &str) -> anyhow::Result<PathBuf> {
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from);
    match (given, root) {
        (Some(p), Some(root)) if p.is_relative() => Ok(root.join(p)),
        (Some(p), _) => Ok(p),
        (None, Some(root)) => Ok(root.join(default)),
        (None, None) => Err(camrank::Error::Config(format!("no output path given and {OUT_ENV} is not set")).into()),
    }
}

fn run_synth(a: SynthArgs) -> anyhow::Result<()> {
    let mut spec = match a.only_rank {
        Some(r) => DifficultySpec::only(r)?,
        None => DifficultySpec::default(),
    };
    if let Some(k) = a.max_instances {
        spec.max_instances = k;
    }
    let out = output_path(a.out, "synth")?;
    let m = synthesize(a.seed, a.n, a.size, &spec, &out)?;
    println!("wrote {} samples to {}", m.entries.len(), out.display());
    Ok(())
}

fn run_annotate(a: AnnotateArgs) -> anyhow::Result<()> {
    let mut opts = AnnotateOptions { normalizer: a.normalizer, tolerance: a.tolerance, ..AnnotateOptions::default() };
    if let Some((low, high)) = a.thresholds {
        opts.thresholds = RankThresholds::new(low, high)?;
    }
    let out = output_path(a.out, "annotate")?;
    let ids = annotate_dirs(&a.sessions, &a.masks, &out, opts)?;
    println!("annotated {} images into {}", ids.len(), out.display());
    Ok(())
}

fn run_train(a: TrainArgs) -> anyhow::Result<()> {
    let mut config = match &a.config {
        Some(p) => TrainConfig::read(p)?,
        None => TrainConfig::default(),
    };
    if let Some(n) = a.iterations {
        config.iterations = n;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    config.validate()?;
    let manifest = DatasetManifest::read(&a.data)?;
    let out = output_path(a.out, "train")?;
    let outcome = train(&config, &manifest, &out)?;
    let totals: Vec<f64> = outcome.log.iter().map(|r| r.objective).collect();
    let s = smoothed(&totals, SMOOTHING_WINDOW);
    if let (Some(first), Some(last)) = (s.first(), s.last()) {
        println!("{} iterations, smoothed loss {first:.4} -> {last:.4}", outcome.log.len());
    }
    for c in &outcome.checkpoints {
        println!("checkpoint {}", c.display());
    }
    Ok(())
}

fn run_eval(a: EvalArgs) -> anyhow::Result<()> {
    let predictor = NetPredictor::from_checkpoint(&a.ckpt, a.size)?;
    let manifest = DatasetManifest::read(&a.data)?;
    let report = evaluate(&predictor, &manifest, ScoreOptions::default())?;
    let path = output_path(a.report, "eval.json")?;
    report.write(&path)?;
    print_aggregate(&report.aggregate)?;
    println!("report {}", path.display());
    Ok(())
}

fn run_infer(a: InferArgs) -> anyhow::Result<()> {
    let predictor = NetPredictor::from_checkpoint(&a.ckpt, a.size)?;
    let out = output_path(a.out, "infer")?;
    let written = infer(&predictor, &a.image, &out)?;
    println!("wrote predictions for {} images to {}", written.len(), out.display());
    Ok(())
}

fn run_score(a: ScoreArgs) -> anyhow::Result<()> {
    let layer = match (a.ranks, a.fixations) {
        (true, _) => ScoredLayer::Rank,
        (_, true) => ScoredLayer::Fixation,
        _ => ScoredLayer::Segmentation,
    };
    let report = score_dirs(&a.pred, &a.gt, layer, ScoreOptions::default())?;
    let path = output_path(a.report, "score.json")?;
    report.write(&path)?;
    print_aggregate(&report.aggregate)?;
    println!("report {}", path.display());
    Ok(())
}

fn print_aggregate(values: &camrank::metrics::MetricValues) -> anyhow::Result<()> {
    let json = serde_json::to_value(values)?;
    for (k, v) in json.as_object().context("metric values serialise to an object")? {
        if let Some(v) = v.as_f64() {
            println!("{k:>15} {v:.4}");
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<camrank::Error>() {
        Some(e) if e.is_validation() => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Synth(a) => run_synth(a),
        Command::Annotate(a) => run_annotate(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Infer(a) => run_infer(a),
        Command::Score(a) => run_score(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their source
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
