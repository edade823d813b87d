//! `malpara`: generate paraphrase candidates, score them, collect human
//! judgments and report metric-versus-human alignment.
//!
//! Exit codes: 0 success, 1 fatal runtime error, 2 usage or input error,
//! 3 partial success (some records failed).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "malpara", version, about = "Malayalam paraphrase generation and evaluation workbench")]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run pipelines over the configured sentence pairs.
    Generate(GenerateArgs),
    /// Fill in automated metric scores for a candidates file.
    Score(ScoreArgs),
    /// Run the annotation service.
    Serve(ServeArgs),
    /// Reduce a judgment journal to per-pair labels and human rates.
    Aggregate(AggregateArgs),
    /// Render the evaluation report.
    Report(ReportArgs),
    /// Probe every configured backend.
    Health(HealthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum PipelineArg {
    M1,
    M2,
    M3,
    M4,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Bleu,
    Meteor,
    Cosine,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Json,
    Csv,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Pipelines to run, in order (comma-separated).
    #[arg(long, value_enum, value_delimiter = ',', required = true)]
    pipeline: Vec<PipelineArg>,
    /// Run on a seeded random sample of this many pairs.
    #[arg(long)]
    sample: Option<usize>,
    /// Seed for sampling and stochastic synonym replacement.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads per pipeline.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
    /// Output path; defaults to [paths] candidates.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "bleu,meteor,cosine")]
    metrics: Vec<MetricArg>,
    /// Output path; defaults to rewriting the input.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Synonym lexicon for the second METEOR matching stage.
    #[arg(long)]
    synonyms: Option<PathBuf>,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    port: Option<u16>,
    #[arg(long)]
    host: Option<String>,
    /// Static UI directory; overrides [service] ui_dir.
    #[arg(long)]
    ui: Option<PathBuf>,
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    journal: PathBuf,
    /// Aggregated labels (JSONL).
    #[arg(long)]
    out: PathBuf,
    /// Candidates file mapping pair ids to pipelines; without it the
    /// pipeline is read from the id prefix.
    #[arg(long)]
    candidates: Option<PathBuf>,
    /// Take the overlap policy from this config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    min_votes: Option<u32>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args)]
struct ReportArgs {
    /// Scored candidates (JSONL).
    #[arg(long, requires = "labels", conflicts_with = "rows")]
    scores: Option<PathBuf>,
    /// Aggregated labels (JSONL).
    #[arg(long, requires = "scores")]
    labels: Option<PathBuf>,
    /// Precomputed rows: a JSON array of rows or a JSON report.
    #[arg(long, required_unless_present = "scores")]
    rows: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "markdown")]
    format: FormatArg,
    /// Output path; defaults to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct HealthArgs {
    #[arg(long)]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();

    let result = match cli.command {
        Command::Generate(args) => commands::generate(args),
        Command::Score(args) => commands::score(args),
        Command::Serve(args) => commands::serve(args),
        Command::Aggregate(args) => commands::aggregate(args),
        Command::Report(args) => commands::report(args),
        Command::Health(args) => commands::health(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
