use clap::{Args, Parser, Subcommand, ValueEnum};
use epx::forest::Mtry;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "epx", version, about = "Ensemble-of-phalanxes ranking for rare-class data")]
pub struct Cli {
    /// Worker threads; results do not depend on this value
    #[arg(long, global = true, env = "EPX_THREADS", value_parser = positive)]
    pub threads: Option<usize>,
    /// File of `key = value` lines giving defaults for the subcommand's flags
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a planted multi-mechanism dataset
    #[command(args_override_self = true)]
    Synth(SynthArgs),
    /// Null distribution of AveP under random rankings
    #[command(args_override_self = true)]
    Null(NullArgs),
    /// Initial groups from Jaccard distances and Ward clustering
    #[command(args_override_self = true)]
    ClusterGroups(ClusterArgs),
    /// Screen and merge initial groups into phalanxes
    #[command(args_override_self = true)]
    Form(FormArgs),
    /// Fit one forest per phalanx and save the model
    #[command(args_override_self = true)]
    Fit(FitArgs),
    /// Rank observations with a saved model
    #[command(args_override_self = true)]
    Rank(RankArgs),
    /// Repeated balanced k-fold cross-validation
    #[command(args_override_self = true)]
    Cv(CvArgs),
    /// Cross-validated ranks of the actives under each phalanx
    #[command(args_override_self = true)]
    Diversity(DiversityArgs),
    /// Hit curves of one or more score columns
    #[command(args_override_self = true)]
    PlotHits(PlotHitsArgs),
}

pub fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err("must lie strictly between 0 and 1".into())
    }
}

fn mtry(s: &str) -> Result<Mtry, String> {
    if s == "auto" {
        return Ok(Mtry::Auto);
    }
    positive(s).map(Mtry::Fixed)
}

#[derive(Debug, Args, Serialize)]
pub struct DataArgs {
    /// Labelled CSV file with a header row
    #[arg(long)]
    pub data: PathBuf,
    /// Name of the 0/1 label column
    #[arg(long, default_value = "y")]
    pub label: String,
    /// Column of observation identifiers, excluded from the features
    #[arg(long)]
    pub id: Option<String>,
    /// File of `name = binary|continuous` lines overriding kind inference
    #[arg(long)]
    pub kinds: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TreeArgs {
    /// Variables tried per split: `auto` (square root of the phalanx size) or a count
    #[arg(long, default_value = "auto", value_parser = mtry)]
    pub mtry: Mtry,
    /// Nodes with at most this many observations become leaves
    #[arg(long, default_value_t = 1, value_parser = positive)]
    pub min_node_size: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct FormationArgs {
    /// Significance level of the screening thresholds
    #[arg(long, default_value_t = 0.95, value_parser = probability)]
    pub alpha: f64,
    /// Random rankings drawn for the null calibration
    #[arg(long, default_value_t = 1000, value_parser = positive)]
    pub permutations: usize,
    /// Trees per forest while forming phalanxes
    #[arg(long, default_value_t = 150, value_parser = positive)]
    pub formation_trees: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupingMode {
    /// Binary columns by name, continuous columns as singletons
    Default,
    /// Every column by name
    Names,
    /// One group per column
    Singletons,
    /// Ward clustering of binary columns on Jaccard distances
    Clusters,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WardArg {
    Raw,
    Squared,
}

#[derive(Debug, Args, Serialize)]
pub struct GroupingArgs {
    /// Plan file with one group per line (comma-separated names); overrides --grouping
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = GroupingMode::Default)]
    pub grouping: GroupingMode,
    /// Cluster count for `--grouping clusters`; defaults to the name-based group count
    #[arg(long, value_parser = positive)]
    pub clusters: Option<usize>,
    #[arg(long, value_enum, default_value_t = WardArg::Raw)]
    pub ward: WardArg,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKindArg {
    Binary,
    Continuous,
}

#[derive(Debug, Args, Serialize)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 500, value_parser = positive)]
    pub n: usize,
    #[arg(long, default_value_t = 0.05, value_parser = probability)]
    pub active_fraction: f64,
    /// Informative blocks, one mechanism of activity each
    #[arg(long, default_value_t = 2, value_parser = positive)]
    pub blocks: usize,
    #[arg(long, default_value_t = 4, value_parser = positive)]
    pub block_size: usize,
    /// Uninformative variables
    #[arg(long, default_value_t = 24)]
    pub noise: usize,
    /// Effect strength shared by all blocks
    #[arg(long, default_value_t = 0.5)]
    pub strength: f64,
    #[arg(long, value_enum, default_value_t = SynthKindArg::Binary)]
    pub kind: SynthKindArg,
    #[arg(long)]
    pub seed: u64,
    /// Output directory
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct NullArgs {
    /// Observations
    #[arg(long, value_parser = positive)]
    pub n: usize,
    /// Actives
    #[arg(long, value_parser = positive)]
    pub m: usize,
    /// Random rankings
    #[arg(long, default_value_t = 1000, value_parser = positive)]
    pub b: usize,
    #[arg(long, default_value_t = 0.95, value_parser = probability)]
    pub alpha: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ClusterArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Cluster count; defaults to the name-based group count
    #[arg(long, value_parser = positive)]
    pub clusters: Option<usize>,
    #[arg(long, value_enum, default_value_t = WardArg::Raw)]
    pub ward: WardArg,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FormArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub grouping: GroupingArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub formation: FormationArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub tree: TreeArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Phalanx file written by `form`
    #[arg(long)]
    pub phalanxes: PathBuf,
    /// Formation audit written by `form`, embedded in the model
    #[arg(long)]
    pub audit: Option<PathBuf>,
    /// Trees per phalanx
    #[arg(long, default_value_t = 500, value_parser = positive)]
    pub trees: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub tree: TreeArgs,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct RankArgs {
    /// Model file written by `fit`
    #[arg(long)]
    pub model: PathBuf,
    /// CSV of observations to rank; needs every column the model uses
    #[arg(long)]
    pub data: PathBuf,
    /// Identifier column; rows are numbered from 1 when absent
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PipelineArg {
    /// Phalanxes from --phalanxes, refitted on every training split
    Fixed,
    /// Phalanx formation rerun on every training split
    Reform,
    /// One forest on all variables
    Forest,
}

#[derive(Debug, Args, Serialize)]
pub struct CvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum, default_value_t = PipelineArg::Fixed)]
    pub pipeline: PipelineArg,
    /// Phalanx file for the fixed pipeline
    #[arg(long)]
    pub phalanxes: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub grouping: GroupingArgs,
    #[command(flatten)]
    #[serde(flatten)]
    pub formation: FormationArgs,
    /// Trees per forest
    #[arg(long, default_value_t = 500, value_parser = positive)]
    pub trees: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub tree: TreeArgs,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    pub folds: usize,
    #[arg(long, default_value_t = 16, value_parser = positive)]
    pub repeats: usize,
    /// Shortlist length for initial enhancement
    #[arg(long, default_value_t = 300, value_parser = positive)]
    pub ie_shortlist: usize,
    /// Also cross-validate a plain forest on the same folds and count wins
    #[arg(long)]
    pub baseline: bool,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct DiversityArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub data: DataArgs,
    /// Model whose phalanxes and forest settings are cross-validated
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = positive)]
    pub folds: usize,
    /// Add a plain-forest column
    #[arg(long)]
    pub baseline: bool,
    /// Also write an SVG heatmap
    #[arg(long)]
    pub svg: bool,
    #[arg(long)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PlotHitsArgs {
    /// CSV holding the 0/1 labels
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "y")]
    pub label: String,
    /// CSV of scores, one row per observation in the same order as --data
    #[arg(long)]
    pub scores: PathBuf,
    /// Comma-separated score columns; defaults to every numeric column other than the label
    #[arg(long)]
    pub columns: Option<String>,
    /// Largest shortlist plotted; defaults to all observations
    #[arg(long, value_parser = positive)]
    pub max_n: Option<usize>,
    #[arg(long, default_value_t = 300, value_parser = positive)]
    pub ie_shortlist: usize,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}
