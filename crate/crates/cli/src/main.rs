//! `tabcond`: preprocess a tablature token corpus, train the conditioned
//! n-gram models, run the instrumentation and genre experiments, and
//! analyse the results.
//!
//! Exit status: 0 success, 1 usage error, 2 data error, 3 internal error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tabcond::pipeline::{PipelineConfig, PipelineError};
use tabcond::prompting::{InstrumentCombo, PromptMode};
use tabcond::GenreId;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Pipeline(e) => e.exit_code() as u8,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "tabcond", version, about = "Control-token conditioning experiments on tablature token corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the raw corpus and write plain, instrument- and genre-conditioned copies.
    Preprocess(PipelineArgs),
    /// Train the three n-gram models and the genre classifier, or one model with --out.
    Train(TrainArgs),
    /// Sample songs from a trained model.
    Generate(GenerateArgs),
    /// Print the prompt that generate would continue.
    Prompt(PromptArgs),
    /// Run the instrument or genre experiment.
    Experiment(ExperimentArgs),
    /// Randomized-corpus baselines against the source corpus.
    #[command(alias = "baseline")]
    Baselines(BaselineArgs),
    /// Kruskal-Wallis and pairwise Wilcoxon analysis of a metrics CSV.
    Stats(StatsArgs),
    /// Plain-text summary of a pipeline output directory.
    Report(ReportArgs),
    /// Every stage in order: preprocess, train, both experiments, baselines, report.
    Run(PipelineArgs),
    /// Write a synthetic corpus.
    Synth(SynthArgs),
}

/// Config file plus overrides; flags win over file values.
#[derive(Debug, Clone, Args)]
pub struct PipelineArgs {
    /// TOML config; relative paths in it resolve against its directory.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    corpus_dir: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long, alias = "seed")]
    rng_seed: Option<u64>,
    /// 150 songs per instrument cell and 20 per genre cell.
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    per_cell_instrument: Option<usize>,
    #[arg(long)]
    per_cell_genre: Option<usize>,
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    smoothing: Option<f64>,
    #[arg(long)]
    max_tokens: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    gc_resolution: Option<u32>,
    /// Count the prompt's measures in PIP and UIP.
    #[arg(long)]
    include_prompt: bool,
    #[arg(long)]
    min_genre_count: Option<usize>,
    #[arg(long)]
    max_unparseable_fraction: Option<f64>,
}

impl PipelineArgs {
    pub fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        macro_rules! set {
            ($flag:ident => $($field:ident).+) => {
                if let Some(v) = self.$flag.clone() {
                    cfg.$($field).+ = v;
                }
            };
        }
        set!(corpus_dir => corpus_dir);
        set!(output_dir => output_dir);
        set!(rng_seed => rng_seed);
        set!(per_cell_instrument => experiment.per_cell_instrument);
        set!(per_cell_genre => experiment.per_cell_genre);
        set!(order => model.order);
        set!(smoothing => model.smoothing);
        set!(max_tokens => generation.max_tokens);
        set!(temperature => generation.temperature);
        set!(top_k => generation.top_k);
        set!(alpha => stats.alpha);
        set!(gc_resolution => metrics.gc_resolution);
        set!(min_genre_count => preprocess.min_genre_count);
        set!(max_unparseable_fraction => preprocess.max_unparseable_fraction);
        cfg.paper_scale |= self.paper_scale;
        cfg.metrics.include_prompt |= self.include_prompt;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Train a single model on --corpus and write it here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Token directory for a single-model run.
    #[arg(long, requires = "out")]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct PromptArgs {
    #[arg(long, value_parser = parse_mode, default_value = "full")]
    mode: PromptMode,
    /// Instrument combination, e.g. dg-b-d.
    #[arg(long, value_parser = parse_combo, conflicts_with_all = ["genre", "prompt"])]
    combo: Option<InstrumentCombo>,
    #[arg(long, value_parser = parse_genre, conflicts_with = "prompt")]
    genre: Option<GenreId>,
    /// Song whose first two measures seed a genre prompt, or a bare token snippet.
    #[arg(long, requires = "genre")]
    snippet_file: Option<PathBuf>,
    /// Literal prompt tokens.
    #[arg(long)]
    prompt: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    prompt: PromptArgs,
    #[arg(long, default_value_t = 1024)]
    max_tokens: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = 1)]
    count: usize,
    #[arg(long, alias = "seed", default_value_t = 0)]
    rng_seed: u64,
    /// Directory for generated songs; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Instrument,
    Genre,
    All,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    #[arg(long, value_enum, default_value = "all")]
    kind: KindArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RandomizeKind {
    Pitch,
    Rhythm,
}

#[derive(Debug, Args)]
struct BaselineArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Only randomize --input into --out instead of the full comparison.
    #[arg(long, value_enum, requires_all = ["input", "out"])]
    kind: Option<RandomizeKind>,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// metrics.csv from an experiment or the baselines.
    #[arg(long)]
    metrics: PathBuf,
    /// Metric columns; defaults to every one of pce, gc, pip, uip present.
    #[arg(long, value_delimiter = ',')]
    metric: Vec<String>,
    /// Grouping column; prompt_mode when present, else group.
    #[arg(long)]
    group_by: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long)]
    no_continuity_correction: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Pipeline output directory; overrides the config.
    #[arg(long)]
    dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SynthKind {
    /// Genres with disjoint note alphabets, plus a genre manifest.
    Separable,
    /// Tonal, rhythmically regular songs.
    Natural,
    /// Random well-formed documents for parser testing.
    Fuzz,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, value_enum)]
    kind: SynthKind,
    /// Songs in total, or per genre for the separable corpus.
    #[arg(long, default_value_t = 100)]
    count: usize,
    #[arg(long, alias = "rng-seed", default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_mode(s: &str) -> Result<PromptMode, String> {
    s.parse().map_err(|e: tabcond::prompting::PromptError| e.to_string())
}

fn parse_combo(s: &str) -> Result<InstrumentCombo, String> {
    s.parse().map_err(|e: tabcond::prompting::PromptError| e.to_string())
}

fn parse_genre(s: &str) -> Result<GenreId, String> {
    GenreId::normalize(s).map_err(|e| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Preprocess(args) => commands::preprocess(&args.resolve()?),
        Command::Train(args) => match (&args.out, &args.corpus) {
            (Some(out), corpus) => commands::train_single(&args.pipeline.resolve()?, corpus.as_deref(), out),
            (None, _) => commands::train(&args.pipeline.resolve()?),
        },
        Command::Generate(args) => commands::generate(&args),
        Command::Prompt(args) => commands::prompt(&args),
        Command::Experiment(args) => commands::experiment(&args.pipeline.resolve()?, args.kind),
        Command::Baselines(args) => {
            let cfg = args.pipeline.resolve()?;
            match (args.kind, &args.input, &args.out) {
                (Some(kind), Some(input), Some(out)) => commands::randomize(&cfg, kind, input, out),
                _ => commands::baselines(&cfg),
            }
        }
        Command::Stats(args) => commands::stats(&args),
        Command::Report(args) => {
            let dir = match args.dir {
                Some(dir) => dir,
                None => args.pipeline.resolve()?.output_dir,
            };
            commands::report(&dir)
        }
        Command::Run(args) => commands::run_all(&args.resolve()?),
        Command::Synth(args) => commands::synth(&args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
