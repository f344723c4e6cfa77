use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use kvc_core::corpus::CorpusKind;

use crate::commands::Method;

#[derive(Debug, Parser)]
#[command(name = "kvc", version, about = "Keystroke verification benchmark engine")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus and its ground-truth key file.
    Synth(SynthArgs),
    /// Validate a corpus (and key) and write it back in canonical form.
    Ingest(IngestArgs),
    /// Fit the feature normaliser and statistical weights on a development corpus.
    Features(FeaturesArgs),
    /// Generate the comparison list for an evaluation key file.
    Protocol(ProtocolArgs),
    /// Train the triplet-loss embedding model.
    Train(TrainArgs),
    /// Score every comparison of a list.
    Score(ScoreArgs),
    /// Compute the metrics of a score file.
    Evaluate(EvaluateArgs),
    /// Rank systems from their evaluation summaries.
    Report(ReportArgs),
    /// Run every stage end to end into one directory.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Replay settings from a manifest written by an earlier run.
    #[arg(long, value_name = "MANIFEST")]
    pub config: Option<PathBuf>,
    /// Where to write this run's manifest [default: next to the main output].
    #[arg(long, value_name = "FILE")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProfileArgs {
    /// Start from the degenerate profile where every subject types alike.
    #[arg(long)]
    pub shared: bool,
    /// Generator profile file (key=value lines).
    #[arg(long, value_name = "FILE")]
    pub profile: Option<PathBuf>,
    /// Override one profile parameter, e.g. `--set hold_spread=0.4`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Sessions per subject [default: 15].
    #[arg(long)]
    pub sessions: Option<usize>,
    /// `dev` or `eval` [default: dev].
    #[arg(long)]
    pub kind: Option<CorpusKind>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub key_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// `dev` or `eval` [default: dev].
    #[arg(long)]
    pub kind: Option<CorpusKind>,
    /// Key file with subject and demographic information.
    #[arg(long)]
    pub key: Option<PathBuf>,
    /// Drop development subjects with fewer sessions [default: 15].
    #[arg(long)]
    pub min_sessions: Option<usize>,
    /// Evaluation key whose subjects must not appear in this development corpus.
    #[arg(long)]
    pub disjoint_from: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub key_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FeaturesArgs {
    /// Development corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Lower clipping quantile [default: 0.001].
    #[arg(long)]
    pub clip_low: Option<f64>,
    /// Upper clipping quantile [default: 0.999].
    #[arg(long)]
    pub clip_high: Option<f64>,
    #[arg(long)]
    pub normalizer_out: Option<PathBuf>,
    #[arg(long)]
    pub weights_out: Option<PathBuf>,
    /// Optional per-session statistics table.
    #[arg(long)]
    pub stats_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ProtocolArgs {
    /// Evaluation key file.
    #[arg(long)]
    pub key: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Age bin edges in years [default: 10,20,30,40,50,60,70].
    #[arg(long)]
    pub age_bins: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// Development corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub normalizer: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional per-epoch loss table.
    #[arg(long)]
    pub trace_out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    /// Triplet margin [default: 1.5].
    #[arg(long)]
    pub margin: Option<f64>,
    /// Adam step size [default: 0.0001].
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// [default: 60]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 16]
    #[arg(long)]
    pub subjects_per_batch: Option<usize>,
    /// [default: 4]
    #[arg(long)]
    pub sessions_per_subject: Option<usize>,
    /// Hidden layer widths, comma separated [default: 128].
    #[arg(long)]
    pub hidden: Option<String>,
    /// [default: 64]
    #[arg(long)]
    pub embedding_dim: Option<usize>,
    /// Fixed sequence length L [default: 70].
    #[arg(long)]
    pub sequence_length: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ScoreArgs {
    /// `statistical` or `embedding`.
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Kind of the scored corpus [default: eval].
    #[arg(long)]
    pub kind: Option<CorpusKind>,
    #[arg(long)]
    pub list: Option<PathBuf>,
    /// Statistical weights (statistical method).
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Model file (embedding method).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Scoring threads [default: 1]. Does not affect the output.
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub list: Option<PathBuf>,
    /// Ground-truth key; when given the list is checked against it.
    #[arg(long)]
    pub key: Option<PathBuf>,
    /// Name shown in the report [default: system].
    #[arg(long)]
    pub system: Option<String>,
    /// Human-readable report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value summary [default: <out>.summary].
    #[arg(long)]
    pub summary_out: Option<PathBuf>,
    /// Pooled error-rate curve.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    /// Add normal-deviate columns to the curve file.
    #[arg(long)]
    pub probit: bool,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ReportArgs {
    /// Summary file; repeat once per system.
    #[arg(long = "summary")]
    pub summaries: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// [default: 1000]
    #[arg(long)]
    pub dev_subjects: Option<usize>,
    /// [default: 1000]
    #[arg(long)]
    pub eval_subjects: Option<usize>,
    /// Sessions per development subject [default: 15].
    #[arg(long)]
    pub dev_sessions: Option<usize>,
    /// [default: 1]
    #[arg(long)]
    pub workers: Option<usize>,
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[command(flatten)]
    pub common: Common,
}
