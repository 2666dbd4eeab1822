//! The `tppkit` command line.
//!
//! Every subcommand resolves its settings (flags over an optional JSON config
//! file over defaults), writes a manifest holding them, and only then does its
//! work. `tppkit rerun MANIFEST` repeats a run from its manifest.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 numerical failure.

mod run;
mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::autodiff::TensorError;
use crate::eval::EvalError;
use crate::model::ModelError;
use crate::train::TrainError;

pub use run::execute;
pub use settings::{
    merge, GenSettings, Job, Manifest, ReportSettings, SplitMode, SplitSettings, TrainSettings, SEED_ENV,
};
use settings::{read_config, resolve, Flags};

#[derive(Debug, Parser)]
#[command(name = "tppkit", version, about = "Multi-channel neural graphical event models for event streams")]
struct Cli {
    /// JSON config file. Top-level `seed`/`parallel`, plus one object per
    /// subcommand; flags take precedence.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads for per-stream work. Results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    parallel: Option<usize>,
    /// Manifest path [default: OUT_DIR/<subcommand>.manifest.json].
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a random PGEM and simulate streams from it.
    GenPgem(GenArgs),
    /// Split a dataset into train and test parts.
    Split(SplitArgs),
    /// Train a model.
    Train(TrainArgs),
    /// Test log-likelihood per stream.
    Eval(EvalArgs),
    /// Label-to-label attention graph.
    AttnGraph(AttnArgs),
    /// Per-label intensities at every token of one stream.
    Trace(TraceArgs),
    /// Repeat a run from its manifest.
    Rerun {
        manifest_file: PathBuf,
    },
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    labels: Option<usize>,
    #[arg(long)]
    streams: Option<usize>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Base name of the stream files.
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Lower end of the log-uniform rate range.
    #[arg(long)]
    rate_min: Option<f64>,
    #[arg(long)]
    rate_max: Option<f64>,
}

#[derive(Debug, Args)]
struct SplitArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, value_enum)]
    by: Option<SplitMode>,
    /// Share of streams (or of the horizon) that goes to train.
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    /// Validation data for per-epoch scores and early stopping.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fake epochs per gap (K).
    #[arg(long)]
    fakes: Option<usize>,
    /// Hidden width per channel (m).
    #[arg(long)]
    channels: Option<usize>,
    /// Memory depth (J); 0 disables attention.
    #[arg(long)]
    memory: Option<usize>,
    #[arg(long)]
    embed: Option<usize>,
    /// Hidden width of the intensity network.
    #[arg(long)]
    hidden: Option<usize>,
    /// Feed raw time stamps instead of t / T.
    #[arg(long)]
    raw_time: bool,
    /// Only snapshot states after real events into the memory bank.
    #[arg(long)]
    bank_real_only: bool,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Streams per optimizer step.
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    clip: Option<f64>,
    /// Weight of the next-label cross-entropy (λ_p).
    #[arg(long)]
    prediction_weight: Option<f64>,
    /// Weight of the intensity-network L2 penalty (λ_w).
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Fakes per gap [default: the checkpoint's].
    #[arg(long)]
    fakes: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: ReportArgs,
}

#[derive(Debug, Args)]
struct AttnArgs {
    #[command(flatten)]
    common: ReportArgs,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args)]
struct TraceArgs {
    #[command(flatten)]
    common: ReportArgs,
    /// Stream id [default: the first stream].
    #[arg(long)]
    stream: Option<String>,
}

fn report_flags(a: &ReportArgs) -> Flags {
    Flags::default()
        .set("checkpoint", a.ckpt.clone())
        .set("data", a.data.clone())
        .set("fakes", a.fakes)
        .set("out_dir", a.out_dir.clone())
}

fn build_job(command: Command, file: &serde_json::Value) -> anyhow::Result<Job> {
    Ok(match command {
        Command::GenPgem(a) => {
            let flags = Flags::default()
                .set("labels", a.labels)
                .set("streams", a.streams)
                .set("horizon", a.horizon)
                .set("seed", a.seed)
                .set("name", a.name)
                .set("out_dir", a.out_dir)
                .set("generator.rate_min", a.rate_min)
                .set("generator.rate_max", a.rate_max);
            Job::GenPgem(resolve("gen-pgem", file, flags.into_value(), true)?)
        }
        Command::Split(a) => {
            let flags = Flags::default()
                .set("data", a.data)
                .set("by", a.by)
                .set("fraction", a.fraction)
                .set("seed", a.seed)
                .set("out_dir", a.out_dir);
            Job::Split(resolve("split", file, flags.into_value(), true)?)
        }
        Command::Train(a) => {
            let flags = Flags::default()
                .set("data", a.data)
                .set("validation", a.val)
                .set("out_dir", a.out_dir)
                .set("seed", a.seed)
                .set("model.fake_count", a.fakes)
                .set("model.channel_width", a.channels)
                .set("model.memory_depth", a.memory)
                .set("model.embed_dim", a.embed)
                .set("model.intensity_hidden", a.hidden)
                .set("model.normalize_time", a.raw_time.then_some(false))
                .flag("model.bank_real_only", a.bank_real_only)
                .set("train.epochs", a.epochs)
                .set("train.learning_rate", a.lr)
                .set("train.batch_size", a.batch)
                .set("train.clip_norm", a.clip)
                .set("train.prediction_weight", a.prediction_weight)
                .set("train.weight_decay", a.weight_decay)
                .set("train.patience", a.patience);
            let mut s: TrainSettings = resolve("train", file, flags.into_value(), true)?;
            s.train.seed = s.seed;
            Job::Train(s)
        }
        Command::Eval(a) => Job::Eval(resolve("eval", file, report_flags(&a.common).into_value(), false)?),
        Command::AttnGraph(a) => {
            let flags = report_flags(&a.common).set("threshold", a.threshold);
            Job::AttnGraph(resolve("attn-graph", file, flags.into_value(), false)?)
        }
        Command::Trace(a) => {
            let flags = report_flags(&a.common).set("stream", a.stream);
            Job::Trace(resolve("trace", file, flags.into_value(), false)?)
        }
        Command::Rerun { .. } => unreachable!("handled by the caller"),
    })
}

fn tensor_numerical(e: &TensorError) -> bool {
    matches!(e, TensorError::NonFinite { .. } | TensorError::LogDomain { .. })
}

fn model_numerical(e: &ModelError) -> bool {
    matches!(e, ModelError::Tensor(t) if tensor_numerical(t))
}

fn train_numerical(e: &TrainError) -> bool {
    match e {
        TrainError::NonFinite { .. } | TrainError::NonPositiveRate { .. } => true,
        TrainError::Tensor(t) => tensor_numerical(t),
        TrainError::Model(m) => model_numerical(m),
        _ => false,
    }
}

/// Exit code for a failed run: 2 for numerical failures, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> i32 {
    let numerical = err.chain().any(|cause| {
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            train_numerical(e)
        } else if let Some(e) = cause.downcast_ref::<EvalError>() {
            match e {
                EvalError::Train(t) => train_numerical(t),
                EvalError::Model(m) => model_numerical(m),
                _ => false,
            }
        } else if let Some(e) = cause.downcast_ref::<ModelError>() {
            model_numerical(e)
        } else {
            cause.downcast_ref::<TensorError>().is_some_and(tensor_numerical)
        }
    });
    if numerical {
        2
    } else {
        1
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<String> {
    let file = read_config(cli.config.as_deref())?;
    let file_parallel = file.get("parallel").and_then(|v| v.as_u64()).map(|v| v as usize);
    match cli.command {
        Command::Rerun { manifest_file } => {
            let manifest = Manifest::load(&manifest_file)?;
            let parallel = cli.parallel.unwrap_or(manifest.parallel);
            execute(&manifest.job, parallel, &manifest_file)
        }
        command => {
            let job = build_job(command, &file)?;
            let parallel = cli.parallel.or(file_parallel).unwrap_or(1).max(1);
            let manifest_path =
                cli.manifest.unwrap_or_else(|| job.out_dir().join(format!("{}.manifest.json", job.name())));
            execute(&job, parallel, &manifest_path)
        }
    }
}

/// Runs the command line given by `args` (program name first) and returns the
/// exit code. The one-line summary goes to stdout, errors to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}
