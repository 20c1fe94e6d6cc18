//! The `disfluency` command-line tool.
//!
//! [`run`] parses arguments, expands an optional TOML config file into flags,
//! dispatches to a subcommand and maps failures to exit codes: 0 on success,
//! 1 on usage errors, 2 on data errors. Every file a subcommand writes gets
//! a sibling `<file>.manifest.json` that `replay` can re-execute.

mod commands;
mod config;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};
use serde::Serialize;

pub use manifest::{manifest_path, sha256_hex, ArtifactDigest, RunManifest, MANIFEST_SUFFIX};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "disfluency",
    version,
    about = "Disfluency annotation, insertion and evaluation"
)]
pub struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// TOML file whose keys mirror the flags, at top level or under
    /// `[<subcommand>]`.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Validate a corpus and write it in a canonical format.
    Parse(ParseArgs),
    /// Print corpus statistics.
    Stats(StatsArgs),
    /// Split a corpus into train and test parts.
    Split(SplitArgs),
    /// Train an insertion model from a disfluent corpus.
    Train(TrainArgs),
    /// Insert disfluencies into fluent text.
    Insert(InsertArgs),
    /// Score generated utterances against references.
    Eval(EvalArgs),
    /// Two-sample t-test on two lists of numbers.
    Ttest(TtestArgs),
    /// Render utterances as TTS-ready text.
    Render(RenderArgs),
    /// Write the LoRA fine-tuning configuration.
    FinetuneConfig(FinetuneArgs),
    /// Insert disfluencies through a remote completion service.
    InsertRemote(InsertRemoteArgs),
    /// Re-run the command recorded in a manifest and verify its outputs.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Parse(_) => "parse",
            Command::Stats(_) => "stats",
            Command::Split(_) => "split",
            Command::Train(_) => "train",
            Command::Insert(_) => "insert",
            Command::Eval(_) => "eval",
            Command::Ttest(_) => "ttest",
            Command::Render(_) => "render",
            Command::FinetuneConfig(_) => "finetune-config",
            Command::InsertRemote(_) => "insert-remote",
            Command::Replay(_) => "replay",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CorpusInput {
    /// Input corpus.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// markup, bio or jsonl; guessed from the extension when absent.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct ParseArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    /// Output format: markup, bio or jsonl.
    #[arg(long, default_value = "markup")]
    pub to: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct StatsArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct SplitArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    #[arg(long, default_value_t = 0.1)]
    pub test_fraction: f64,
    #[arg(long)]
    pub train_out: PathBuf,
    #[arg(long)]
    pub test_out: PathBuf,
    #[arg(long, default_value = "jsonl")]
    pub to: String,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InsertArgs {
    /// Model written by `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Fluent text, one utterance per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Target disfluency rate; defaults to the model's training rate.
    #[arg(long)]
    pub target_rate: Option<f64>,
    #[arg(long, default_value_t = 64)]
    pub max_events: usize,
    /// Comma-separated subset of repetition, filler, false-start,
    /// silent-pause, substitution.
    #[arg(long, value_delimiter = ',')]
    pub allow_kinds: Vec<String>,
    #[arg(long, default_value = "markup")]
    pub to: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub generated: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    /// Format of both corpora; guessed from the extensions when absent.
    #[arg(long)]
    pub format: Option<String>,
    /// Per-token hypothesis embeddings, one block per utterance.
    #[arg(long, requires = "ref_embeddings")]
    pub hyp_embeddings: Option<PathBuf>,
    #[arg(long, requires = "hyp_embeddings")]
    pub ref_embeddings: Option<PathBuf>,
    /// Compare against this rate instead of the references' rate.
    #[arg(long)]
    pub reference_rate: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TtestArgs {
    /// Whitespace-separated numbers.
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    /// Welch's unequal-variance test instead of pooled Student's t.
    #[arg(long)]
    pub welch: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct RenderArgs {
    #[command(flatten)]
    pub corpus: CorpusInput,
    #[arg(long, default_value = "...")]
    pub pause_surface: String,
    #[arg(long)]
    pub drop_fillers: bool,
    #[arg(long)]
    pub no_fragment_hyphen: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also export the utterances as JSONL.
    #[arg(long)]
    pub jsonl_out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub base_model: Option<String>,
    #[arg(long)]
    pub lora_rank: Option<u32>,
    #[arg(long)]
    pub lora_alpha: Option<u32>,
    #[arg(long)]
    pub lora_dropout: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_seq_len: Option<u32>,
    #[arg(long)]
    pub batch_size: Option<u32>,
    #[arg(long)]
    pub grad_accum_steps: Option<u32>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct InsertRemoteArgs {
    /// Fluent text, one utterance per line.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Completion endpoint; `DISFLUENCY_ENDPOINT` when absent.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Per-request timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    pub timeout: f64,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
    #[arg(long, default_value_t = 4)]
    pub max_in_flight: usize,
    #[arg(long, default_value = "markup")]
    pub to: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    #[arg(long)]
    pub manifest: PathBuf,
}

#[derive(Debug)]
pub(crate) enum CliError {
    Usage(String),
    Data(String),
    /// Clap already printed help, version or an error.
    Reported(i32),
}

pub(crate) fn data(e: impl std::fmt::Display) -> CliError {
    CliError::Data(e.to_string())
}

pub(crate) fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn command() -> clap::Command {
    Cli::command()
        .args_override_self(true)
        .mut_subcommands(|s| s.args_override_self(true))
}

/// Expands the config file and parses `argv` (program name first).
fn parse(argv: &[String]) -> Result<(Cli, Vec<String>), CliError> {
    let resolved = config::expand(&command(), argv)?;
    let matches = match command().try_get_matches_from(&resolved) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return Err(CliError::Reported(if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }));
        }
    };
    let cli = Cli::from_arg_matches(&matches).map_err(usage)?;
    Ok((cli, resolved))
}

/// Runs the tool on `argv` (program name first) and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<String> = argv
        .into_iter()
        .map(|a| a.into().to_string_lossy().into_owned())
        .collect();
    match parse(&argv).and_then(|(cli, resolved)| commands::dispatch(cli, &argv, &resolved)) {
        Ok(()) => EXIT_OK,
        Err(CliError::Reported(code)) => code,
        Err(CliError::Usage(m)) => {
            eprintln!("disfluency: {m}");
            EXIT_USAGE
        }
        Err(CliError::Data(m)) => {
            eprintln!("disfluency: {m}");
            EXIT_DATA
        }
    }
}
