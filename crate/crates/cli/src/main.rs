//! `brainsem` command-line front end.
//!
//! Exit status: 0 success, 1 usage error, 2 malformed input data,
//! 3 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use brainsem::ErrorKind;

#[derive(Debug, Parser)]
#[command(name = "brainsem", version, about = "Scalable three-layer semantic codec for brain signals")]
struct Cli {
    /// Worker threads for per-record work (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic dataset with manifest and targets.
    Synth(SynthArgs),
    /// Assign train/val/test splits stratified by class.
    Split(SplitArgs),
    /// Train one layer codec.
    Train(TrainArgs),
    /// Encode records into layered containers, one file per record.
    Encode(EncodeArgs),
    /// Decode containers up to a layer and print the semantic outputs.
    Decode(DecodeArgs),
    /// Classify records straight from their signals through the layer-1 codec.
    Classify(ClassifyArgs),
    /// Compute the metric report for a split.
    Evaluate(EvaluateArgs),
    /// Train one label codec per lambda and report rate against accuracy.
    Sweep(SweepArgs),
    /// Send containers over a bandwidth-limited link with prefix dropping.
    Simulate(SimulateArgs),
    /// Print container header fields as key=value lines.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct DatasetArgs {
    /// Signal file (EEGD).
    #[arg(long)]
    dataset: PathBuf,
    /// Manifest JSON (labels, captions, splits).
    #[arg(long)]
    manifest: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 50)]
    per_class: usize,
    #[arg(long, default_value_t = 16)]
    channels: usize,
    #[arg(long, default_value_t = 128)]
    samples: usize,
    #[arg(long, default_value_t = 1000)]
    sample_rate_hz: u32,
    /// Noise standard deviation; 1 is about 0 dB SNR.
    #[arg(long, default_value_t = 1.0)]
    noise_sigma: f64,
    /// Output signal file.
    #[arg(long)]
    out: PathBuf,
    /// Manifest path [default: OUT with a .json extension].
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Also write orthonormal label embeddings (EMBD) here.
    #[arg(long)]
    label_db: Option<PathBuf>,
    /// Also write per-record caption embeddings (EMBD) here.
    #[arg(long)]
    caption_db: Option<PathBuf>,
    /// Also write per-record target thumbnails (THMB) here.
    #[arg(long)]
    thumbnails: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    label_dim: usize,
    #[arg(long, default_value_t = 32)]
    caption_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long, default_value_t = 0.8)]
    train: f64,
    #[arg(long, default_value_t = 0.1)]
    val: f64,
    #[arg(long, default_value_t = 0.1)]
    test: f64,
    /// Where to write the updated manifest [default: overwrite --manifest].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ArchChoice {
    /// Small networks sized from the dataset's signal shape.
    Compact,
    /// Full-size networks (128 channels × 440 samples input).
    Paper,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    data: DatasetArgs,
    /// Layer to train: 1 label, 2 caption, 3 thumbnail.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    layer: u8,
    /// Training config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network size [default: compact, or the config's when --config is given].
    #[arg(long, value_enum)]
    arch: Option<ArchChoice>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Label embeddings (layer 1 targets).
    #[arg(long)]
    label_db: Option<PathBuf>,
    /// Caption embeddings keyed by record index (layer 2 targets).
    #[arg(long)]
    caption_db: Option<PathBuf>,
    /// Target thumbnails, one per record (layer 3 targets).
    #[arg(long)]
    thumbnails: Option<PathBuf>,
    /// Trained layer-1 checkpoint, required for layer 2.
    #[arg(long)]
    ocl_checkpoint: Option<PathBuf>,
    /// Output checkpoint (EIDW).
    #[arg(long)]
    out: PathBuf,
    /// Write the per-epoch log here as well as to stdout.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct CheckpointArgs {
    #[arg(long)]
    ocl_checkpoint: Option<PathBuf>,
    #[arg(long)]
    icl_checkpoint: Option<PathBuf>,
    #[arg(long)]
    scl_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    checkpoints: CheckpointArgs,
    /// Highest layer to include; layers below it are always included.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
    layer: u8,
    /// Only encode records of this split (train, val, test).
    #[arg(long)]
    split: Option<String>,
    /// Omit the container checksum.
    #[arg(long)]
    no_crc: bool,
    /// Output directory; records go to NNNNNN.eidc.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    /// A container file or a directory of .eidc files.
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    checkpoints: CheckpointArgs,
    /// Decode at most this many layers.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
    max_layer: u8,
    #[arg(long)]
    label_db: PathBuf,
    /// Caption embeddings used to name the decoded caption feature.
    #[arg(long)]
    caption_db: Option<PathBuf>,
    /// Write decoded thumbnails (THMB) here, in input order.
    #[arg(long)]
    thumb_out: Option<PathBuf>,
    /// Write the JSON result here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    ocl_checkpoint: PathBuf,
    #[arg(long)]
    label_db: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[command(flatten)]
    checkpoints: CheckpointArgs,
    #[arg(long)]
    label_db: PathBuf,
    /// Target thumbnails for SSIM (needs --scl-checkpoint).
    #[arg(long)]
    thumbnails: Option<PathBuf>,
    /// Caption pairs JSON: [{record_index, candidate, reference}].
    #[arg(long)]
    captions: Option<PathBuf>,
    #[arg(long, default_value = "test")]
    split: String,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    data: DatasetArgs,
    #[arg(long)]
    label_db: PathBuf,
    /// Comma-separated lambda values (at least two).
    #[arg(long, value_delimiter = ',', default_values_t = [400.0, 4000.0, 40000.0])]
    lambdas: Vec<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network size [default: compact, or the config's when --config is given].
    #[arg(long, value_enum)]
    arch: Option<ArchChoice>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// A container file or a directory of .eidc files.
    #[arg(long)]
    input: PathBuf,
    /// Per-signal budget in bits.
    #[arg(long)]
    budget_bits: Option<u64>,
    /// Channel JSON: {"budget_bits_per_signal": N, "policy": "prefix_drop"}.
    #[arg(long)]
    channel: Option<PathBuf>,
    /// Directory for the delivered containers.
    #[arg(long)]
    delivered: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long)]
    input: PathBuf,
}

fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Usage => 1,
        ErrorKind::Data => 2,
        ErrorKind::Runtime => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let jobs = cli.jobs;
    let run = move || commands::run(cli.command);
    let result = if jobs == 0 { run() } else { brainsem::par::with_threads(jobs, run) };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.kind()))
        }
    }
}
