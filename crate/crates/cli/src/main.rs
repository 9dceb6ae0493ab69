//! Command-line front end: featurize audio, train the two stages and the
//! baselines, route utterances through the cascade, and score the results.

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{load_file_config, Settings};

#[derive(Debug, Parser)]
#[command(name = "intent-sieve", version, about = "Speech intention identification with a text sieve")]
struct Cli {
    /// Seed for every random choice (splits, initialization, shuffling).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON configuration file; flags take precedence over it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract acoustic features from WAV files into ISF1 dumps.
    Featurize(FeaturizeArgs),
    /// Train one stage or a baseline and write its checkpoint.
    Train(TrainArgs),
    /// Run the cascade over a manifest.
    Route(RouteArgs),
    /// Score predictions against gold labels.
    Eval(EvalArgs),
    /// Train and compare the speech-only, text-only, multimodal, and cascade models.
    Compare(CompareArgs),
    /// Fleiss' kappa for a ratings file.
    Kappa(KappaArgs),
    /// Write a seeded synthetic corpus (WAVs, manifest, text corpus, vectors).
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct FeaturizeArgs {
    /// WAV files.
    inputs: Vec<PathBuf>,
    /// Featurize every clip listed in a JSON-lines manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Store mel bins in decibels.
    #[arg(long)]
    apply_log: bool,
    /// Process files on all cores.
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// `fci`, `three_a`, or `baseline:<kind>`.
    #[arg(long)]
    stage: String,
    /// Tab-separated text corpus (`text<TAB>label`).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// JSON-lines speech manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Character vector file.
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RouteArgs {
    #[arg(long)]
    fci: PathBuf,
    #[arg(long = "three-a")]
    three_a: PathBuf,
    #[arg(long)]
    vectors: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    fallback: Option<Fallback>,
    /// Send low-margin sieve decisions to the audio stage as well.
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Fallback {
    Error,
    SecondBest,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON-lines predictions (a `label` field per line) or one label per line.
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    manifest: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Label space to score in; 6 for manifests and 7 for corpora by default.
    #[arg(long, value_parser = clap::value_parser!(u8).range(6..=7))]
    space: Option<u8>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    vectors: PathBuf,
    /// Models to run: a (speech only), b (text only), c (multimodal), d (cascade).
    #[arg(long, value_delimiter = ',', default_value = "a,b,c,d")]
    models: Vec<String>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct KappaArgs {
    #[arg(long)]
    ratings: PathBuf,
    #[arg(long, value_enum, default_value = "labels")]
    format: RatingFormat,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RatingFormat {
    /// One item per line, one label per rater.
    Labels,
    /// One item per line, one count per category.
    Counts,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 0.15)]
    iu_fraction: f64,
    /// Character vector dimension.
    #[arg(long, default_value_t = 100)]
    dim: usize,
}

/// What a command accomplished; per-item failures make the exit code nonzero.
#[derive(Debug, Default)]
pub struct Outcome {
    pub failures: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) if o.failures == 0 => ExitCode::SUCCESS,
        Ok(o) => {
            eprintln!("{} item(s) failed", o.failures);
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> intent_sieve::Result<Outcome> {
    if let Some(c) = &cli.config {
        data::require_exists(c)?;
    }
    let file = load_file_config(cli.config.as_deref())?;
    let settings = Settings::resolve(file, cli.seed)?;
    let out = cli.out;
    match cli.command {
        Command::Featurize(a) => commands::featurize(a, settings, out),
        Command::Train(a) => commands::train(a, settings, out),
        Command::Route(a) => commands::route(a, settings, out),
        Command::Eval(a) => commands::eval(a, out),
        Command::Compare(a) => commands::compare(a, settings, out),
        Command::Kappa(a) => commands::kappa(a, out),
        Command::Synth(a) => commands::synth(a, settings, out),
    }
}
