use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tsdet::eval::EncoderDesign;
use tsdet::model::FusionStrategy;
use tsdet::scenegen::{Mode, Split};

#[derive(Debug, Parser)]
#[command(name = "tsdet", version, about = "Reference-guided targeted sound detection")]
pub struct Cli {
    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus: audio, annotation sidecars and manifests.
    BuildDataset(BuildDatasetArgs),
    /// Train a detector on a dataset directory.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a dataset.
    Evaluate(EvaluateArgs),
    /// Train and compare fusion strategies and encoder designs.
    Ablate(AblateArgs),
    /// Detect the reference's sound class in a single mixture.
    Predict(PredictArgs),
}

/// Where the run configuration comes from. Flags given on the command line
/// override values from the file or preset.
#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,

    /// Built-in configuration used when no file is given.
    #[arg(long, default_value = "desk", value_parser = ["default", "desk", "full"])]
    pub preset: String,

    /// Run seed (required unless the config file sets one).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BuildDatasetArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    /// Output directory.
    #[arg(short, long)]
    pub out: PathBuf,

    /// Number of scenes across all splits.
    #[arg(long)]
    pub scenes: Option<usize>,

    /// Replace an existing dataset in the output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct TrainOverrides {
    /// Dataset directory (overrides data.dir).
    #[arg(short, long)]
    pub data: Option<PathBuf>,

    #[arg(long)]
    pub mode: Option<Mode>,

    #[arg(long)]
    pub fusion: Option<FusionStrategy>,

    #[arg(long)]
    pub encoder: Option<EncoderDesign>,

    /// Comma-separated class ids left out of training, e.g. 7,8,9.
    #[arg(long, value_delimiter = ',')]
    pub unseen_classes: Option<Vec<usize>>,

    #[arg(long)]
    pub epochs: Option<usize>,

    #[arg(long)]
    pub lr: Option<f64>,

    #[arg(long)]
    pub batch_size: Option<usize>,

    /// Disable spectrogram augmentation.
    #[arg(long)]
    pub no_augment: bool,

    /// Set the encoder input standardization from the training features.
    #[arg(long)]
    pub norm_from_data: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    #[command(flatten)]
    pub overrides: TrainOverrides,

    /// Run directory. Defaults to `$TSDET_RUN_ROOT/<name>`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,

    /// Run name under the run root; derived from the settings if omitted.
    #[arg(long)]
    pub name: Option<String>,

    /// Root for run directories.
    #[arg(long, env = "TSDET_RUN_ROOT", default_value = "runs")]
    pub run_root: PathBuf,

    /// Replace an existing run directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint file (e.g. `<run>/best.ckpt.json`).
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Dataset directory.
    #[arg(short, long)]
    pub data: PathBuf,

    #[arg(long, default_value = "test")]
    pub split: Split,

    #[arg(long, default_value = "strong")]
    pub mode: Mode,

    /// Binarization threshold.
    #[arg(long, default_value_t = tsdet::eval::DEFAULT_THRESHOLD)]
    pub threshold: f64,

    /// Segment length in seconds.
    #[arg(long, default_value_t = tsdet::eval::DEFAULT_SEGMENT_S)]
    pub segment: f64,

    /// Skip the width-3 median filter.
    #[arg(long)]
    pub no_median: bool,

    /// Report directory. Defaults to `eval-<split>-<mode>` next to the checkpoint.
    #[arg(short, long)]
    pub out: Option<PathBuf>,

    /// Also write the per-class F1 chart and a localization figure.
    #[arg(long)]
    pub plots: bool,

    /// Pair shown in the localization figure (default: first positive pair).
    #[arg(long)]
    pub pair: Option<String>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,

    #[command(flatten)]
    pub overrides: TrainOverrides,

    /// Fusion strategies to compare.
    #[arg(long, value_delimiter = ',', default_value = "multiply,film,cross_attention")]
    pub fusions: Vec<FusionStrategy>,

    /// Encoder designs to compare.
    #[arg(long, value_delimiter = ',', default_value = "unified,dual")]
    pub encoders: Vec<EncoderDesign>,

    /// Output directory. Defaults to `$TSDET_RUN_ROOT/ablation-s<seed>`.
    #[arg(short, long)]
    pub out: Option<PathBuf>,

    #[arg(long, env = "TSDET_RUN_ROOT", default_value = "runs")]
    pub run_root: PathBuf,

    /// Print the planned grid and exit.
    #[arg(long)]
    pub dry_run: bool,

    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,

    /// Mixture WAV.
    #[arg(long)]
    pub mixture: PathBuf,

    /// Reference WAV.
    #[arg(long)]
    pub reference: PathBuf,

    #[arg(long, default_value_t = tsdet::eval::DEFAULT_THRESHOLD)]
    pub threshold: f64,

    #[arg(long)]
    pub no_median: bool,

    /// Emit JSON instead of text.
    #[arg(long)]
    pub json: bool,

    /// Write a localization figure (SVG).
    #[arg(long)]
    pub plot: Option<PathBuf>,
}
