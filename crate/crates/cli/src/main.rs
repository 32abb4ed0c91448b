mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

/// Chitchat-interference augmentation and evaluation for task-oriented dialogue.
#[derive(Debug, Parser)]
#[command(name = "interfere", version)]
pub struct Cli {
    /// Seed for sampling and generation; recorded in every output.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML config file; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert raw MultiWOZ 2.2 (and optionally FusedChat) into canonical split files.
    Import(ImportArgs),
    /// Add backstories and reactions to a FusedChat corpus.
    Augment(AugmentArgs),
    /// Vocabulary and turn-length statistics against a baseline corpus.
    Stats(StatsArgs),
    /// Score model predictions against a gold corpus.
    Evaluate(EvaluateArgs),
    /// Sample human-annotation tasks.
    Tasks(TasksArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Label distributions, Fleiss's kappa and rank aggregation over annotations.
    Agreement(AgreementArgs),
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    /// MultiWOZ 2.2 root with train/dev/test directories.
    #[arg(long)]
    pub multiwoz: PathBuf,
    /// FusedChat JSON with prepended chitchat.
    #[arg(long)]
    pub fusedchat: Option<PathBuf>,
    /// Venue database directory used for delexicalization.
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Directory holding `<split>.json` of a FusedChat corpus.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// `mock:<transcript.json>` or `http:<url>`.
    #[arg(long)]
    pub backend: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub db: Option<PathBuf>,
    /// Directory with situation/backstory/reaction templates.
    #[arg(long)]
    pub templates: Option<PathBuf>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub retries: Option<u32>,
    /// Levenshtein similarity at or above which a generation is rejected.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub acceptance_floor: Option<f64>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Augmented corpus directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Baseline corpus directory.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Predictions JSONL.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub db: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TasksArgs {
    /// `rating` or `ranking`.
    #[arg(long)]
    pub kind: String,
    /// Augmented corpus directory.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// `NAME=predictions.jsonl`, given once per system for ranking tasks.
    #[arg(long = "system")]
    pub systems: Vec<String>,
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long)]
    pub tasks: Option<PathBuf>,
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory with the built annotation UI.
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AgreementArgs {
    #[arg(long)]
    pub annotations: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn print_error(kind: &str, message: String, causes: Vec<String>) {
    let body = json!({ "error": { "kind": kind, "message": message, "causes": causes } });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    let level = std::env::var("INTERFERE_LOG")
        .ok()
        .and_then(|v| v.parse::<tracing::Level>().ok())
        .unwrap_or(tracing::Level::WARN);
    tracing_subscriber::fmt().with_writer(std::io::stderr).with_max_level(level).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            print_error("usage", e.kind().to_string(), vec![e.render().to_string().trim().to_string()]);
            return ExitCode::from(2);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = if e.is::<commands::BelowFloor>() { "acceptance_floor" } else { "failed" };
            let causes = e.chain().skip(1).map(|c| c.to_string()).collect();
            print_error(kind, e.to_string(), causes);
            if kind == "acceptance_floor" {
                ExitCode::from(3)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
