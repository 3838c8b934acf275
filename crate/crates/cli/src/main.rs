mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dialact::pipeline::FreezePolicy;

use config::PhaseOverrides;

#[derive(Parser)]
#[command(
    name = "dialact",
    version,
    about = "Dialogue act recognition with cross-lingual transfer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a fresh model on a source corpus and write a checkpoint.
    Train(TrainArgs),
    /// Replace a checkpoint's head and fine-tune it on a target corpus.
    Finetune(FinetuneArgs),
    /// Score a checkpoint on a labelled corpus.
    Eval(EvalArgs),
    /// k-fold cross-validation on one corpus.
    Cv(CvArgs),
    /// Run the baseline and transfer conditions repeatedly and report.
    Suite(SuiteArgs),
    /// Majority-class baseline.
    Baseline(BaselineArgs),
    /// Label distribution of a corpus as a two-column percentage table.
    InspectCorpus(InspectArgs),
}

#[derive(Args)]
pub struct Common {
    /// Settings file (key = value with [initial], [finetune], [model] sections).
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long = "lr", value_name = "RATE")]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// head_only or all.
    #[arg(long)]
    pub freeze: Option<FreezePolicy>,
}

impl TrainFlags {
    pub fn overrides(&self) -> PhaseOverrides {
        PhaseOverrides {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            batch_size: self.batch_size,
            freeze: self.freeze,
        }
    }
}

#[derive(Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    /// Sentence-embedding file; repeat to merge several.
    #[arg(long, value_name = "PATH", required = true)]
    pub embeddings: Vec<PathBuf>,
    /// mlp, cnn or mhsatt.
    #[arg(long)]
    pub model: Option<dialact::models::ModelKind>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Pretrained word vectors (CNN).
    #[arg(long, value_name = "PATH")]
    pub word_vectors: Option<PathBuf>,
    /// Further corpora whose tokens join the vocabulary; repeatable.
    #[arg(long, value_name = "PATH")]
    pub vocab_from: Vec<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct FinetuneArgs {
    /// Source checkpoint.
    #[arg(long, value_name = "PATH")]
    pub from: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "PATH", required = true)]
    pub embeddings: Vec<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub out: PathBuf,
    /// Train on a stratified sample of this many turns of the corpus.
    #[arg(long, value_name = "N")]
    pub sample: Option<usize>,
    /// Expected model kind of the checkpoint.
    #[arg(long)]
    pub model: Option<dialact::models::ModelKind>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct EvalArgs {
    /// Checkpoint to score.
    #[arg(long, value_name = "PATH")]
    pub model: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "PATH", required = true)]
    pub embeddings: Vec<PathBuf>,
    /// Report path; PATH.json gets the same fields. Defaults to the
    /// checkpoint path with extension `.eval.txt`.
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
}

#[derive(Args)]
pub struct CvArgs {
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "PATH", required = true)]
    pub embeddings: Vec<PathBuf>,
    /// Kind of the per-fold model trained from scratch.
    #[arg(long)]
    pub model: Option<dialact::models::ModelKind>,
    /// Fine-tune this checkpoint on each training split instead.
    #[arg(long, value_name = "PATH", conflicts_with = "model")]
    pub from: Option<PathBuf>,
    #[arg(long, value_name = "PATH")]
    pub word_vectors: Option<PathBuf>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct SuiteArgs {
    /// Target training corpus.
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    /// Target test corpus.
    #[arg(long, value_name = "PATH")]
    pub test: PathBuf,
    /// Train on a stratified sample of this many turns of the corpus.
    #[arg(long, value_name = "N")]
    pub sample: Option<usize>,
    #[arg(long, value_name = "PATH", required = true)]
    pub embeddings: Vec<PathBuf>,
    /// Source checkpoint for the transfer conditions.
    #[arg(long, value_name = "PATH")]
    pub from: Option<PathBuf>,
    /// Kind of the scratch model; defaults to the checkpoint's kind.
    #[arg(long)]
    pub model: Option<dialact::models::ModelKind>,
    #[arg(long, value_name = "PATH")]
    pub word_vectors: Option<PathBuf>,
    /// Comma-separated: majority, scratch, no_finetune, finetune.
    #[arg(long)]
    pub conditions: Option<String>,
    #[arg(long)]
    pub runs: Option<usize>,
    #[arg(long, value_name = "PATH")]
    pub report: Option<PathBuf>,
    /// Include wall-clock seconds per condition in the report.
    #[arg(long)]
    pub timing: bool,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args)]
pub struct BaselineArgs {
    /// Training corpus that fixes the majority label.
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "PATH")]
    pub test: PathBuf,
}

#[derive(Args)]
pub struct InspectArgs {
    #[arg(long, value_name = "PATH")]
    pub corpus: PathBuf,
}

/// A failure reported as one line on stderr.
pub struct Failure {
    pub message: String,
    pub code: u8,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 2,
        }
    }

    pub fn run(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: 1,
        }
    }
}

impl From<dialact::Error> for Failure {
    fn from(e: dialact::Error) -> Self {
        Failure::run(e.to_string())
    }
}

/// First paragraph of a clap message, folded onto one line.
fn one_line(rendered: &str) -> String {
    rendered
        .lines()
        .map(str::trim)
        .take_while(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", one_line(&e.render().to_string()));
            return ExitCode::from(2);
        }
    };
    let outcome = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Finetune(a) => commands::finetune(a),
        Command::Eval(a) => commands::eval(a),
        Command::Cv(a) => commands::cv(a),
        Command::Suite(a) => commands::suite(a),
        Command::Baseline(a) => commands::baseline(a),
        Command::InspectCorpus(a) => commands::inspect(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let line = one_line(&f.message.replace('\n', " "));
            eprintln!("error: {line}");
            ExitCode::from(f.code)
        }
    }
}
