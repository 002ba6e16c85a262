mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Capture-quality gateway for assistive visual question answering.
#[derive(Debug, Parser)]
#[command(name = "viassist", version)]
struct Cli {
    /// key = value settings file (thresholds, backend URLs).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Classify one capture and print the directive response.
    Assess(AssessArgs),
    /// Assess a capture and, when it is good, ask the answer backend.
    Answer(AnswerArgs),
    /// Validate, summarise or augment a dataset directory.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Score predictions against dataset references.
    Eval(EvalArgs),
    /// Run seeded closed-loop reshoot trials.
    Simulate(SimulateArgs),
    /// Write a labeled synthetic corpus.
    GenCorpus(GenCorpusArgs),
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Append-only session journal, replayed on start.
    #[arg(long)]
    journal: Option<PathBuf>,
    /// Seed for session ids.
    #[arg(long)]
    seed: Option<u64>,
    /// Answer every good capture with this text instead of calling a backend.
    #[arg(long)]
    mock_answer: Option<String>,
    /// Directory of images with `.boxes.json` sidecars, recognised by exact
    /// pixel match in place of a detector.
    #[arg(long)]
    fixtures: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Args)]
struct AssessArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    question: String,
    /// Detections file in the detector reply schema; replaces the detector.
    #[arg(long)]
    annotations: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Args)]
struct AnswerArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    question: String,
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Skip the quality gate and send the question with the reshoot clause.
    #[arg(long)]
    baseline: bool,
    /// Answer with this text instead of calling a backend.
    #[arg(long)]
    mock_answer: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Check every manifest line and referenced image.
    Validate {
        root: PathBuf,
        /// Do not check that image files exist.
        #[arg(long)]
        skip_images: bool,
    },
    /// Per-category counts and answerable ratio.
    Stats { root: PathBuf },
    /// Add paraphrased questions and write the result to a new root.
    Augment {
        root: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
        /// Use built-in rewrite patterns instead of the answer backend.
        #[arg(long)]
        offline: bool,
    },
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    predictions: PathBuf,
    /// `mock`, `one-hot`, `url` (configured embed URL) or an http(s) URL.
    #[arg(long, default_value = "mock")]
    embeddings: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 1000)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    max_steps: usize,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Also write one trace file per trial into this directory.
    #[arg(long)]
    traces: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenCorpusArgs {
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .with_writer(std::io::stderr)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.code)
        }
    }
}
