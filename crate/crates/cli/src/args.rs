use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "ucbs", version, about = "Concept-based explanations with superpixel surrogates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic shapes-on-noise dataset
    Synth(SynthArgs),
    /// Build the auxiliary dataset manifest for one target class
    BuildData(BuildDataArgs),
    /// Fine-tune a binary surrogate (training a base model first if none is given)
    Train(TrainArgs),
    /// Score the superpixels of single images
    ExplainLocal(ExplainLocalArgs),
    /// Cluster local concepts of many images into global concepts
    ExplainGlobal(ExplainGlobalArgs),
    /// Compute explanation metrics over target-class images
    Evaluate(EvaluateArgs),
    /// Friedman test over a blocks x treatments accuracy matrix
    Rank(RankArgs),
    /// Per-image outcome report with concept maps
    Report(ReportArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::BuildData(_) => "build-data",
            Command::Train(_) => "train",
            Command::ExplainLocal(_) => "explain-local",
            Command::ExplainGlobal(_) => "explain-global",
            Command::Evaluate(_) => "evaluate",
            Command::Rank(_) => "rank",
            Command::Report(_) => "report",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SlicArgs {
    /// Requested superpixel count
    #[arg(long, default_value_t = 50)]
    pub k: usize,
    #[arg(long, default_value_t = 10.0)]
    pub compactness: f64,
    #[arg(long = "slic-iterations", default_value_t = 10)]
    pub iterations: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub size: usize,
    #[arg(long, default_value_t = 2)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 100)]
    pub val_per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BuildDataArgs {
    /// Root with `<class>/train/*.png`
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub target_class: String,
    /// Number of target images to segment
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[arg(long, default_value_t = 1300)]
    pub n_ood: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    /// Root with `<class>/{train,val}/*.png`
    #[arg(long)]
    pub data: PathBuf,
    /// Manifest from `build-data`; built on the fly when absent
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub target_class: Option<String>,
    /// Base checkpoint; a base model is trained on all classes when absent
    #[arg(long)]
    pub base: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub base_epochs: usize,
    #[arg(long, default_value_t = 50)]
    pub m: usize,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[arg(long, default_value_t = 1300)]
    pub n_ood: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 64)]
    pub input_size: usize,
    /// Negatives in the third validation scenario
    #[arg(long, default_value_t = 1000)]
    pub n_neg: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainLocalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Image to explain (repeatable)
    #[arg(long, required_unless_present = "images_dir")]
    pub image: Vec<PathBuf>,
    #[arg(long)]
    pub images_dir: Option<PathBuf>,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[arg(long, default_value_t = 3)]
    pub p: usize,
    #[arg(long, alias = "out-dir")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ExplainGlobalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub images_dir: PathBuf,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[arg(long, default_value_t = 3)]
    pub p: usize,
    /// k-means cluster count
    #[arg(long = "clusters", visible_alias = "K", default_value_t = 5)]
    pub clusters: usize,
    #[arg(long, default_value_t = 3)]
    pub g: usize,
    #[arg(long, default_value_t = 3)]
    pub r: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, alias = "out-dir")]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    Insertion,
    Deletion,
    Sensn,
    Faith,
    Ssc,
    Sdc,
    Completeness,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Target-class images
    #[arg(long)]
    pub images_dir: PathBuf,
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "insertion,deletion,sensn,faith,ssc,sdc,completeness"
    )]
    pub metrics: Vec<MetricName>,
    #[command(flatten)]
    pub slic: SlicArgs,
    /// Random subsets per image for sensitivity-n and faithfulness
    #[arg(long, default_value_t = 50)]
    pub samples: usize,
    /// Concept-set sizes for completeness; `all` keeps every segment
    #[arg(long, value_delimiter = ',', default_value = "1,3,5,all")]
    pub completeness_sizes: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RankArgs {
    /// CSV with a header `block,<treatment>...` and one row per block
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportMode {
    Misclassification,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long, value_enum)]
    pub mode: ReportMode,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Root with `<class>/<split>/*.png`; the class directory is the ground truth
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "val")]
    pub split: String,
    /// Keep at most this many images per class
    #[arg(long)]
    pub limit_per_class: Option<usize>,
    /// `global.json` from `explain-global`
    #[arg(long)]
    pub global: Option<PathBuf>,
    #[command(flatten)]
    pub slic: SlicArgs,
    #[arg(long, default_value_t = 3)]
    pub p: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}
