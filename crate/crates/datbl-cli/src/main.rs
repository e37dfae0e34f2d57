//! `datbl` — dialogue act tagging with transformation-based learning.
//!
//! Subcommands cover the whole workflow: `gen-corpus`, `extract-cues`,
//! `train`, `tag`, `evaluate`, `committee-train`, and `compare`. Every
//! command reads an optional TOML run configuration (`--config`); flags
//! override file values. Exit codes: 0 success, 1 validation or domain
//! error, 2 I/O error.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Args, Parser, Subcommand};

use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "datbl", version, about = "Dialogue act tagging with transformation-based learning")]
struct Cli {
    /// TOML run configuration; flags override its values
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Directory for default output artifacts
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// More progress detail on stderr
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a reproducible synthetic corpus
    GenCorpus(GenCorpusArgs),
    /// Discover dialogue act cues and write the cue TSV
    ExtractCues(ExtractCuesArgs),
    /// Train a rule-list model and write the model file
    Train(TrainArgs),
    /// Tag a corpus with a model or a committee
    Tag(TagArgs),
    /// Score a tagged corpus against gold tags
    Evaluate(EvaluateArgs),
    /// Train K models with error-focused reweighting
    CommitteeTrain(CommitteeTrainArgs),
    /// Compare substring modes over repeated seeded trials
    Compare(CompareArgs),
}

/// Flags shared by everything that trains.
#[derive(Args, Clone)]
struct TrainFlags {
    /// Improvement-score threshold
    #[arg(long)]
    theta: Option<f64>,
    /// Monte Carlo sample size per mistagged utterance
    #[arg(long)]
    r_sample: Option<usize>,
    /// Safety cap on learned rules
    #[arg(long)]
    max_rules: Option<usize>,
    /// Base RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Tag-context window
    #[arg(long)]
    window: Option<usize>,
    /// Template inventory: "default" or a subset like "T1,T2,T3,T9"
    #[arg(long)]
    templates: Option<String>,
    /// Exhaustive candidate generation instead of Monte Carlo
    #[arg(long)]
    exhaustive: bool,
}

/// Flags shared by everything that selects cues.
#[derive(Args, Clone)]
struct CueFlags {
    /// Substring source: none, external-list, all-ngrams, entropy,
    /// entropy+filter, entropy+cluster, entropy+filter+cluster
    #[arg(long)]
    mode: Option<String>,
    /// Entropy threshold in bits (default: marginal tag entropy)
    #[arg(long)]
    theta1: Option<f64>,
    /// Support threshold (strictly-greater-than)
    #[arg(long)]
    theta2: Option<u32>,
    /// Maximum substring length in tokens
    #[arg(long)]
    max_len: Option<usize>,
}

#[derive(Args)]
struct GenCorpusArgs {
    /// Canned generator spec (currently: scheduling)
    #[arg(long, default_value = "scheduling")]
    preset: String,
    /// Number of dialogues
    #[arg(long)]
    dialogues: Option<usize>,
    /// Label-noise rate
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output corpus file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractCuesArgs {
    /// Gold-tagged training corpus
    #[arg(long)]
    train: Option<PathBuf>,
    /// Cluster map file (required by cluster modes)
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// External cue-phrase list (required by external-list mode)
    #[arg(long)]
    cue_list: Option<PathBuf>,
    #[command(flatten)]
    cues: CueFlags,
    /// Output cue TSV
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    /// Cue TSV produced by extract-cues
    #[arg(long)]
    cues: Option<PathBuf>,
    /// Cluster map; apply it whenever the cues were extracted with one
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[command(flatten)]
    flags: TrainFlags,
    /// Output model file
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TagArgs {
    /// Corpus to tag (defaults to the configured test corpus)
    #[arg(long)]
    input: Option<PathBuf>,
    /// Model file
    #[arg(long, conflicts_with = "committee")]
    model: Option<PathBuf>,
    /// Committee manifest
    #[arg(long)]
    committee: Option<PathBuf>,
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Output tagged corpus
    #[arg(long)]
    out: Option<PathBuf>,
    /// Confidence TSV (committee mode only)
    #[arg(long)]
    confidence_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Gold-tagged reference corpus (defaults to the configured test corpus)
    #[arg(long)]
    gold: Option<PathBuf>,
    /// Corpus whose tag column holds the predictions
    #[arg(long)]
    tagged: Option<PathBuf>,
    /// Also write the report as TSV
    #[arg(long)]
    tsv_out: Option<PathBuf>,
}

#[derive(Args)]
struct CommitteeTrainArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    cues: Option<PathBuf>,
    #[arg(long)]
    clusters: Option<PathBuf>,
    /// Committee size
    #[arg(long)]
    k: Option<usize>,
    /// Error-weight multiplier
    #[arg(long)]
    beta: Option<f64>,
    #[command(flatten)]
    flags: TrainFlags,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    train: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    /// Comma-separated substring modes to compare
    #[arg(long, default_value = "none,entropy,entropy+filter,all-ngrams")]
    modes: String,
    /// Trials per mode
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    clusters: Option<PathBuf>,
    #[arg(long)]
    cue_list: Option<PathBuf>,
    #[command(flatten)]
    cues: CueFlags,
    #[command(flatten)]
    flags: TrainFlags,
    /// Also write the comparison table to a file
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = RunConfig::load(cli.config.as_deref())?;
    let ctx = commands::Ctx {
        config,
        out_dir: cli.out_dir,
        verbose: cli.verbose,
    };
    match cli.command {
        Command::GenCorpus(args) => commands::gen_corpus(&ctx, args),
        Command::ExtractCues(args) => commands::extract_cues(&ctx, args),
        Command::Train(args) => commands::train(&ctx, args),
        Command::Tag(args) => commands::tag(&ctx, args),
        Command::Evaluate(args) => commands::evaluate(&ctx, args),
        Command::CommitteeTrain(args) => commands::committee_train(&ctx, args),
        Command::Compare(args) => commands::compare(&ctx, args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
