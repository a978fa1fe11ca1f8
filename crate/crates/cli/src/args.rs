use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use imis_core::granularity::{
    OverlapMeasure, PolicyMode, DEFAULT_CLEAN_RADIUS, DEFAULT_MATCH_THRESHOLD, DEFAULT_MIN_FG_RATE,
};
use imis_core::interact::{
    ClickPlacement, InitialPrompt, Protocol, DEFAULT_JITTER, DEFAULT_MAX_INTERACTIONS,
    DEFAULT_ROUNDS,
};
use imis_core::metrics::GroupBy;
use imis_core::proposer::{
    DEFAULT_GRID, DEFAULT_MAX_COVER, DEFAULT_MIN_CONFIDENCE, DEFAULT_NMS_IOU,
};

use crate::segmenters::SegmenterSpec;

#[derive(Debug, Parser)]
#[command(
    name = "imis",
    version,
    about = "Interactive-mask generation, quality control and simulated interaction"
)]
#[command(arg_required_else_help = true, propagate_version = true)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true, value_parser = clap::value_parser!(usize))]
    pub threads: Option<usize>,

    /// Default dataset root when a command is given no dataset.
    #[arg(long, global = true, env = "IMIS_DATA")]
    pub data: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert a raw source folder into a canonical dataset.
    Ingest(IngestArgs),
    /// Generate interactive masks with the grid-click pipeline.
    GenMasks(GenArgs),
    /// Reconcile generated masks with ground truth and apply the quality policy.
    Qc(QcArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
    /// Run simulated interactive sessions and write per-target Dice records.
    Simulate(SimulateArgs),
    /// Run one robustness protocol.
    Sweep(SweepArgs),
    /// Aggregate Dice records.
    Eval(EvalArgs),
    /// Serve the session API.
    Serve(ServeArgs),
    /// Answer segmentation requests on stdin/stdout with the reference segmenter.
    #[command(hide = true)]
    Worker(WorkerArgs),
    /// Write a built-in fixture.
    #[command(hide = true)]
    MakeFixture(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    pub src: PathBuf,
    pub dst: PathBuf,
    /// Extra synonyms, merged over the built-in table.
    #[arg(long)]
    pub synonyms: Option<PathBuf>,
    /// Use only the synonyms file, not the built-in table.
    #[arg(long)]
    pub no_builtin_synonyms: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.9)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 3000)]
    pub test_cap: usize,
    #[arg(long, default_value_t = 1.5)]
    pub max_aspect: f64,
    #[arg(long, default_value_t = 0.001)]
    pub min_fg: f64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    pub dataset: Option<PathBuf>,
    /// `ref`, `ref:TOLERANCE`, `oracle` or `proc:COMMAND`.
    #[arg(long, default_value = "ref")]
    pub segmenter: SegmenterSpec,
    #[arg(long, default_value_t = DEFAULT_GRID)]
    pub grid: usize,
    #[arg(long, default_value_t = DEFAULT_MIN_CONFIDENCE)]
    pub conf: f64,
    #[arg(long, default_value_t = DEFAULT_NMS_IOU)]
    pub nms: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_COVER)]
    pub maxcover: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MeasureArg {
    BoxIou,
    OverGt,
}

impl From<MeasureArg> for OverlapMeasure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::BoxIou => OverlapMeasure::BoxIou,
            MeasureArg::OverGt => OverlapMeasure::OverGtArea,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    PerMask,
    Quantile,
}

impl From<ModeArg> for PolicyMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::PerMask => PolicyMode::PerMask,
            ModeArg::Quantile => PolicyMode::Quantile,
        }
    }
}

#[derive(Debug, Args)]
pub struct QcArgs {
    pub dataset: Option<PathBuf>,
    /// File listing flagged dataset names, one per line.
    #[arg(long)]
    pub flagged: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MIN_FG_RATE)]
    pub fg_rate: f64,
    #[arg(long, default_value_t = DEFAULT_MATCH_THRESHOLD)]
    pub overlap: f64,
    #[arg(long, value_enum, default_value = "box-iou")]
    pub measure: MeasureArg,
    #[arg(long, default_value_t = DEFAULT_CLEAN_RADIUS)]
    pub clean_radius: usize,
    #[arg(long, value_enum, default_value = "per-mask")]
    pub mode: ModeArg,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    pub dataset: Option<PathBuf>,
    #[arg(long, conflicts_with = "csv")]
    pub json: bool,
    #[arg(long)]
    pub csv: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
    All,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PlacementArg {
    Uniform,
    Centroid,
}

impl From<PlacementArg> for ClickPlacement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::Uniform => ClickPlacement::Uniform,
            PlacementArg::Centroid => ClickPlacement::Centroid,
        }
    }
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    /// Initial prompt: click, box, text, text+click or box+click.
    #[arg(long, default_value = "click")]
    pub strategy: InitialPrompt,
    #[arg(long, default_value_t = DEFAULT_ROUNDS)]
    pub rounds: usize,
    #[arg(long, default_value_t = DEFAULT_JITTER)]
    pub jitter: usize,
    #[arg(long, value_enum, default_value = "uniform")]
    pub placement: PlacementArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `ref`, `ref:TOLERANCE`, `oracle` or `proc:COMMAND`.
    #[arg(long, default_value = "ref")]
    pub segmenter: SegmenterSpec,
    /// Which images to use.
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub dataset: Option<PathBuf>,
    #[command(flatten)]
    pub session: SessionArgs,
    /// Output file; default `<dataset>/simulations/<strategy>.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub dataset: Option<PathBuf>,
    /// interaction-count, click-position or bbox-offset.
    #[arg(long)]
    pub protocol: Protocol,
    #[command(flatten)]
    pub session: SessionArgs,
    #[arg(long, default_value_t = DEFAULT_MAX_INTERACTIONS)]
    pub max_interactions: usize,
    /// Box jitter levels for bbox-offset.
    #[arg(long, value_delimiter = ',', default_value = "0,5,10")]
    pub jitters: Vec<usize>,
    /// Also write per-target records as JSON lines.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Record files, or dataset roots whose `simulations/*.jsonl` are read.
    pub inputs: Vec<PathBuf>,
    #[arg(long, default_value = "all")]
    pub group_by: GroupBy,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: std::net::IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Static UI bundle served at `/`.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    /// Directory for session snapshots; sessions survive restarts when set.
    #[arg(long)]
    pub snapshots: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub idle_minutes: u64,
    #[arg(long, default_value_t = 32)]
    pub max_upload_mb: usize,
    #[arg(long)]
    pub cors_origin: Option<String>,
    /// `ref`, `ref:TOLERANCE` or `proc:COMMAND`.
    #[arg(long, default_value = "ref")]
    pub segmenter: SegmenterSpec,
}

#[derive(Debug, Args)]
pub struct WorkerArgs {
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FixtureKind {
    /// Raw source folder of abdominal phantoms, ready for `ingest`.
    DemoSource,
    /// Statistics fixture dataset.
    Stats,
    /// One-image dataset with a bright disk.
    Disk,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(value_enum)]
    pub kind: FixtureKind,
    pub dir: PathBuf,
}
