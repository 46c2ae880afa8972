mod commands;
mod report;
mod run;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use settings::Overrides;

/// Joint knowledge-graph and text embeddings: alignment, training and
/// evaluation. Every command except `report` writes into a fresh run
/// directory under `--out`, next to a manifest of its config and inputs.
#[derive(Debug, Parser)]
#[command(name = "jointkg", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

/// `train.txt`, `valid.txt` and `test.txt`, one `head<TAB>relation<TAB>tail` per line.
#[derive(Debug, Clone, Args)]
pub struct KgArgs {
    #[arg(long, value_name = "DIR")]
    pub kg: PathBuf,
}

/// A run directory holding `checkpoint.json` and `vocab.json`.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_name = "RUN_DIR")]
    pub model: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Label an anchored raw corpus with KG train relations.
    Align {
        #[command(flatten)]
        kg: KgArgs,
        /// JSON lines `{"text": ..., "anchors": [{"start", "end", "entity"}]}`.
        #[arg(long, value_name = "PATH")]
        raw: PathBuf,
        /// `entity<TAB>mention_token` lines overriding the default mention tokens.
        #[arg(long, value_name = "PATH")]
        anchors: Option<PathBuf>,
    },
    /// Skip-gram word vectors over an aligned corpus.
    PretrainWords {
        #[command(flatten)]
        kg: KgArgs,
        #[arg(long, value_name = "PATH")]
        corpus: PathBuf,
        #[arg(long, value_name = "PATH")]
        anchors: Option<PathBuf>,
    },
    /// TransE on the KG alone.
    TrainKg {
        #[command(flatten)]
        kg: KgArgs,
    },
    /// Joint KG and text training.
    TrainJoint {
        #[command(flatten)]
        kg: KgArgs,
        /// Aligned sentences, JSON lines.
        #[arg(long, value_name = "PATH")]
        corpus: PathBuf,
        #[arg(long, value_name = "PATH")]
        anchors: PathBuf,
        /// Initial word vectors (`count dim` header, then `token v1 .. vk`).
        #[arg(long = "word-vectors", value_name = "PATH")]
        word_vectors: Option<PathBuf>,
        /// Held-out aligned sentences whose tokens should get embedding rows.
        #[arg(long = "eval-corpus", value_name = "PATH")]
        eval_corpus: Option<PathBuf>,
    },
    /// Hits@10 of head and tail prediction on the test split.
    EvalEntity {
        #[command(flatten)]
        kg: KgArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Top-1 relation prediction on the test split.
    EvalRelation {
        #[command(flatten)]
        kg: KgArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Precision/recall of relations ranked from sentences alone.
    EvalText {
        #[command(flatten)]
        kg: KgArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_name = "PATH")]
        corpus: PathBuf,
        /// Score every distinct test-split pair instead of the corpus pairs.
        #[arg(long = "test-pairs")]
        test_pairs: bool,
    },
    /// Print stored reports from run directories or report files.
    Report {
        #[arg(required = true, value_name = "PATH")]
        paths: Vec<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::dispatch(cli.command, &cli.overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
