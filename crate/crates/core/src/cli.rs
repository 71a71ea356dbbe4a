//! The `owan` command line: `synth`, `train`, `restore`, `eval` and
//! `analyze`. [`run`] returns the process exit code: 0 on success, 1 on a
//! usage error, 2 when the command itself fails.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::analysis::{self, AnalysisError};
use crate::metrics::{self, MetricsError};
use crate::synth::{build_dataset, DatasetOptions, Protocol, Severity, SynthError};
use crate::train::{self, load_checkpoint, RestoreOptions, TrainConfig, TrainError};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Failed(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Synth(#[from] SynthError),

    #[error(transparent)]
    Train(#[from] TrainError),

    #[error(transparent)]
    Metrics(#[from] MetricsError),

    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

#[derive(Debug, Parser)]
#[command(name = "owan", version, about = "Operation-wise attention network for image restoration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Crop patches from clean images and distort them.
    Synth(SynthArgs),
    /// Train a model from a key=value config file.
    Train(TrainArgs),
    /// Restore every PNG in a directory with a trained checkpoint.
    Restore(RestoreArgs),
    /// Score restored images against references (PSNR, SSIM).
    Eval(EvalArgs),
    /// Attention-weight statistics per distortion tag.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// div2k, mixed, novel-train or novel-test.
    #[arg(long)]
    protocol: String,
    /// Directory of clean images, or a directory holding clean/ and
    /// distorted/ pairs.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory (clean/, distorted/, manifest.csv).
    #[arg(long)]
    out: PathBuf,
    /// Patches per source image.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Square patch side in pixels.
    #[arg(long, default_value_t = 63)]
    patch_size: usize,
    /// Master seed; every crop and distortion derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// mild, moderate or severe (div2k only; random per patch when omitted).
    #[arg(long)]
    severity: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Config file with one key=value per line.
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint to continue from.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Extra key=value overrides applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Args)]
struct RestoreArgs {
    /// Trained checkpoint (.owan).
    #[arg(long)]
    ckpt: PathBuf,
    /// Directory of images to restore.
    #[arg(long = "in")]
    input: PathBuf,
    /// Output directory for the restored PNGs.
    #[arg(long)]
    out: PathBuf,
    /// Write one attention record per (image, layer, op) to this CSV.
    #[arg(long)]
    attention_csv: Option<PathBuf>,
    /// Largest tile side in pixels.
    #[arg(long, default_value_t = 256)]
    tile: usize,
    /// Overlap between neighbouring tiles in pixels.
    #[arg(long, default_value_t = 16)]
    overlap: usize,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Directory of restored PNGs.
    #[arg(long)]
    restored: PathBuf,
    /// Directory of reference PNGs with the same file names.
    #[arg(long)]
    reference: PathBuf,
    /// CSV report path.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Trained checkpoint (.owan).
    #[arg(long)]
    ckpt: PathBuf,
    /// Dataset directory; repeat together with --tag for several tags.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Tag for the matching --data directory.
    #[arg(long, required = true)]
    tag: Vec<String>,
    /// Statistics CSV (tag, layer, op, mean, variance).
    #[arg(long)]
    out: PathBuf,
    /// Difference-map CSV (tag, layer, op, absdiff).
    #[arg(long)]
    diff_out: Option<PathBuf>,
}

/// Parses `args` (including the program name) and runs the subcommand.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Train(a) => train_cmd(a),
        Command::Restore(a) => restore(a),
        Command::Eval(a) => eval(a),
        Command::Analyze(a) => analyze(a),
    }
}

fn print_resolved(command: &str, pairs: &[(&str, String)]) {
    println!("[{command}]");
    for (k, v) in pairs {
        println!("{k}={v}");
    }
}

fn show(p: &Path) -> String {
    p.display().to_string()
}

fn synth(a: SynthArgs) -> Result<(), CliError> {
    let severity = a
        .severity
        .as_deref()
        .map(str::parse::<Severity>)
        .transpose()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let protocol = Protocol::from_name(&a.protocol, severity).map_err(|e| CliError::Usage(e.to_string()))?;
    if severity.is_some() && !matches!(protocol, Protocol::Div2k(_)) {
        return Err(CliError::Usage("--severity applies to the div2k protocol only".into()));
    }
    print_resolved(
        "synth",
        &[
            ("protocol", a.protocol.clone()),
            ("in", show(&a.input)),
            ("out", show(&a.out)),
            ("count", a.count.to_string()),
            ("patch_size", a.patch_size.to_string()),
            ("seed", a.seed.to_string()),
            ("severity", severity.map_or("random".into(), |s| s.to_string())),
        ],
    );
    let opts = DatasetOptions {
        protocol,
        patch_size: a.patch_size,
        count: a.count,
        master_seed: a.seed,
    };
    let manifest = build_dataset(&a.input, &a.out, &opts)?;
    println!("wrote {} pairs to {}", manifest.rows.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.config).map_err(|source| CliError::Io {
        path: a.config.clone(),
        source,
    })?;
    let mut config = TrainConfig::parse_str(&text)?;
    for kv in &a.overrides {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        config.set(k.trim(), v)?;
    }
    config.validate()?;
    let mut pairs = config.to_pairs();
    pairs.push(("resume", a.resume.as_deref().map_or("none".into(), show)));
    print_resolved("train", &pairs);
    let resume = a.resume.as_deref().map(load_checkpoint).transpose()?;
    let outcome = train::train(&config, resume)?;
    if let Some(last) = outcome.losses.last() {
        println!("final step {} loss {}", last.step, last.loss);
    }
    println!("wrote {}", config.out_dir.join("final.owan").display());
    Ok(())
}

fn restore(a: RestoreArgs) -> Result<(), CliError> {
    if a.tile == 0 || a.overlap >= a.tile {
        return Err(CliError::Usage("need --tile > 0 and --overlap < --tile".into()));
    }
    let ckpt = load_checkpoint(&a.ckpt)?;
    let mut pairs = vec![
        ("ckpt", show(&a.ckpt)),
        ("in", show(&a.input)),
        ("out", show(&a.out)),
        ("attention_csv", a.attention_csv.as_deref().map_or("none".into(), show)),
        ("tile", a.tile.to_string()),
        ("overlap", a.overlap.to_string()),
    ];
    pairs.extend(ckpt.config.model.to_pairs());
    pairs.push(("precision", ckpt.config.precision.to_string()));
    print_resolved("restore", &pairs);
    let opts = RestoreOptions {
        max_tile: a.tile,
        overlap: a.overlap,
    };
    let summary = train::restore_images(&ckpt, &a.input, &a.out, &opts)?;
    if let Some(path) = &a.attention_csv {
        analysis::write_attention_csv(path, &summary.records)?;
    }
    println!(
        "restored {} images into {} ({} skipped)",
        summary.written.len(),
        a.out.display(),
        summary.skipped.len()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), CliError> {
    print_resolved(
        "eval",
        &[
            ("restored", show(&a.restored)),
            ("reference", show(&a.reference)),
            ("report", show(&a.report)),
        ],
    );
    let report = metrics::evaluate_pairs(&a.restored, &a.reference)?;
    report.write_csv(&a.report)?;
    for (name, why) in &report.errors {
        log::warn!("{name}: {why}");
    }
    if report.count() == 0 {
        return Err(CliError::Failed(format!(
            "no image pairs could be scored between {} and {}",
            a.restored.display(),
            a.reference.display()
        )));
    }
    println!(
        "scored {} images: mean PSNR {:.4} dB, mean SSIM {:.6}",
        report.count(),
        report.mean_psnr(),
        report.mean_ssim()
    );
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), CliError> {
    if a.data.len() != a.tag.len() {
        return Err(CliError::Usage(format!(
            "got {} --data and {} --tag values; give one tag per directory",
            a.data.len(),
            a.tag.len()
        )));
    }
    let ckpt = load_checkpoint(&a.ckpt)?;
    let mut pairs = vec![("ckpt", show(&a.ckpt))];
    for (d, t) in a.data.iter().zip(&a.tag) {
        pairs.push(("data", format!("{t}:{}", d.display())));
    }
    pairs.push(("out", show(&a.out)));
    pairs.push(("diff_out", a.diff_out.as_deref().map_or("none".into(), show)));
    print_resolved("analyze", &pairs);

    let mut all_stats = Vec::new();
    for (dir, tag) in a.data.iter().zip(&a.tag) {
        let records = analysis::collect_attention(&ckpt, dir, tag)?;
        let s = analysis::stats(tag, &records)?;
        println!("{tag}: {} samples, {} layers × {} ops", s.samples, s.layers, s.ops);
        all_stats.push(s);
    }
    analysis::export_stats_csv(&all_stats, &a.out)?;
    if let Some(path) = &a.diff_out {
        analysis::export_diff_csv(&analysis::diff_maps(&all_stats)?, path)?;
    }
    Ok(())
}
