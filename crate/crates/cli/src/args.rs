use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gatbind::complexbuild::{DEFAULT_INTERACTION_CUTOFF, DEFAULT_POCKET_CUTOFF};
use gatbind::gat::{HeadKind, ModelKind};
use gatbind::metrics::{RankOrder, GOOD_POSE_RMSD};

#[derive(Debug, Parser)]
#[command(
    name = "gatbind",
    version,
    about = "Graph-attention scoring of protein-ligand complexes"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a protein plus ligand poses into a labeled JSONL dataset.
    Prepare(PrepareArgs),
    /// Fit a model and write a checkpoint plus a training log.
    Train(TrainArgs),
    /// Score a dataset with a checkpoint.
    Predict(PredictArgs),
    /// Classification or regression metrics for a prediction CSV.
    Evaluate(EvaluateArgs),
    /// Top-N pose ranking analysis for a prediction CSV.
    Topn(TopnArgs),
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    ModelKind::parse(s).ok_or_else(|| format!("expected gnnf or gnnp, got '{s}'"))
}

fn parse_head(s: &str) -> Result<HeadKind, String> {
    HeadKind::parse(s).ok_or_else(|| format!("expected cls or reg, got '{s}'"))
}

fn parse_order(s: &str) -> Result<RankOrder, String> {
    RankOrder::parse(s).ok_or_else(|| format!("expected asc or desc, got '{s}'"))
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    /// Protein PDB file; its file stem is the target id.
    #[arg(long)]
    pub protein: PathBuf,
    /// SDF file of ligands or docked poses (repeatable).
    #[arg(long = "ligands")]
    pub ligands: Vec<PathBuf>,
    /// Directory whose *.sdf files are read in name order.
    #[arg(long)]
    pub pose_dir: Option<PathBuf>,
    /// Crystal ligand SDF; poses get an RMSD against it.
    #[arg(long)]
    pub crystal: Option<PathBuf>,
    /// Label table CSV with columns id,measure,value.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_POCKET_CUTOFF)]
    pub cutoff_pocket: f64,
    #[arg(long, default_value_t = DEFAULT_INTERACTION_CUTOFF)]
    pub cutoff_interaction: f64,
    /// Downsample the majority activity class.
    #[arg(long)]
    pub balance: bool,
    /// Skip ligands heavier than this many g/mol.
    #[arg(long)]
    pub max_mw: Option<f64>,
    /// Also write train.jsonl and test.jsonl with this training fraction.
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    /// Held-out dataset scored after every epoch.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// key=value settings file; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a checkpoint directory with optimizer state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
    #[arg(long, value_parser = parse_head)]
    pub head: Option<HeadKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    /// Comma-separated MLP hidden widths.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Refuse checkpoints whose head differs.
    #[arg(long, value_parser = parse_head)]
    pub head: Option<HeadKind>,
    /// Refuse checkpoints whose model kind differs.
    #[arg(long, value_parser = parse_model)]
    pub model: Option<ModelKind>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_parser = parse_head)]
    pub head: HeadKind,
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TopnArgs {
    #[arg(long)]
    pub predictions: PathBuf,
    /// Comma-separated list of N values.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,10")]
    pub n: Vec<usize>,
    #[arg(long, value_parser = parse_order, default_value = "desc")]
    pub rank_order: RankOrder,
    /// Poses strictly below this RMSD count as near-native.
    #[arg(long, default_value_t = GOOD_POSE_RMSD)]
    pub rmsd_cutoff: f64,
    #[arg(long)]
    pub out: PathBuf,
}
