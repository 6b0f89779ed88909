//! `cgmrag` command-line pipeline. Every stage reads and writes files.

mod plot;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use cgmrag::context::{summarize_windows, summarizer_registry, RemoteConfig, SummarizerConfig, SummaryStore};
use cgmrag::data::{generate_synthetic_cohort, ingest_csv, split_by_days, write_csv, Split, DEFAULT_MAX_GAP};
use cgmrag::dataset::windows_from_series;
use cgmrag::train::{evaluate_tables, forecast_run, run_ablation, train_run, ForecastTable, TrainConfig};
use cgmrag::{CoreError, ErrorClass, Result};

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  other failure
  2  invalid command line
  3  missing artifact
  4  hash mismatch between artifacts
  5  malformed configuration
  6  invalid input data

Failures print one JSON line on stderr: {\"error\": <kind>, \"message\": <text>}.

Environment:
  CGMRAG_CHAT_URL    chat-completion endpoint for --backend remote
  CGMRAG_EMBED_URL   embedding endpoint for embedder = \"remote\"
  CGMRAG_API_TOKEN   bearer token sent to both endpoints
  CGMRAG_MODEL       model name in chat requests (default gpt-4)
  RUST_LOG           log filter (default warn)";

#[derive(Parser)]
#[command(name = "cgmrag", version, about = "Context-aware retrieval-augmented glucose forecasting", after_help = EXIT_CODES)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort as train.csv and test.csv.
    Synth(SynthArgs),
    /// Summarize every window of the given CSVs into a summary store.
    Contextualize(ContextArgs),
    /// Pretrain, freeze, index and fine-tune into a run directory.
    Train(TrainArgs),
    /// Forecast every window of a CSV with a trained run.
    Forecast(ForecastArgs),
    /// Score predictions against references.
    Eval(EvalArgs),
    /// Train and evaluate the five component ablations.
    Ablate(AblateArgs),
    /// Per-window plot data and SVG renderings.
    Plot(PlotArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 4)]
    patients: usize,
    #[arg(long, default_value_t = 10)]
    days: usize,
    /// Trailing days of each patient written to test.csv.
    #[arg(long, default_value_t = 2)]
    test_days: usize,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Rule,
    Remote,
}

#[derive(Args)]
struct ContextArgs {
    /// Training CSV.
    #[arg(long)]
    train: PathBuf,
    /// Test CSV, summarized into the same store.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Backend::Rule)]
    backend: Backend,
    /// Longest gap in readings that is interpolated.
    #[arg(long, default_value_t = DEFAULT_MAX_GAP)]
    max_gap: usize,
    /// Response cache for the remote backend.
    #[arg(long, default_value = "cache")]
    cache: PathBuf,
    /// Concurrent remote requests.
    #[arg(long, default_value_t = 4)]
    parallelism: usize,
    /// Fail instead of falling back to rule-based summaries.
    #[arg(long)]
    fail_hard: bool,
    /// Summary store to write (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Overrides {
    /// TOML run configuration; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from the small test configuration instead of the defaults.
    #[arg(long, conflicts_with = "config")]
    toy: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs_pretrain: Option<usize>,
    #[arg(long)]
    epochs_finetune: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Translation loss weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Skip retrieval and forecast with the pretrain head.
    #[arg(long)]
    no_rag: bool,
    /// Concatenate the two embeddings instead of attending over them.
    #[arg(long)]
    no_context_attention: bool,
    /// Drop the cross-translation loss.
    #[arg(long)]
    no_translation_loss: bool,
}

impl Overrides {
    fn resolve(&self) -> Result<TrainConfig> {
        let mut cfg = match (&self.config, self.toy) {
            (Some(p), _) => TrainConfig::load(p)?,
            (None, true) => TrainConfig::toy(),
            (None, false) => TrainConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.lr {
            cfg.lr = v;
        }
        if let Some(v) = self.epochs_pretrain {
            cfg.epochs_pretrain = v;
        }
        if let Some(v) = self.epochs_finetune {
            cfg.epochs_finetune = v;
        }
        if let Some(v) = self.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = self.lambda {
            cfg.translation_weight = v;
        }
        cfg.use_rag &= !self.no_rag;
        cfg.use_context_attention &= !self.no_context_attention;
        cfg.use_translation_loss &= !self.no_translation_loss;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    cfg: Overrides,
    /// Training CSV.
    #[arg(long)]
    train: PathBuf,
    /// Summary store from `contextualize`; not needed for glucose-only runs.
    #[arg(long)]
    summaries: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ForecastArgs {
    /// Run directory from `train`.
    #[arg(long)]
    run: PathBuf,
    /// CSV whose windows are forecast.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    summaries: Option<PathBuf>,
    /// Predictions CSV in mg/dL.
    #[arg(long)]
    out: PathBuf,
    /// Also write the observed 12-step trajectories here.
    #[arg(long)]
    references: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    references: PathBuf,
    /// Directory for report.json and report.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    cfg: Overrides,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: PathBuf,
    #[arg(long)]
    summaries: Option<PathBuf>,
    /// Directory for one run per row and ablation.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlotArgs {
    #[arg(long)]
    predictions: PathBuf,
    #[arg(long)]
    references: PathBuf,
    /// Evenly spaced windows to draw, 0 for all.
    #[arg(long, default_value_t = 12)]
    max_windows: usize,
    #[arg(long)]
    out: PathBuf,
}

fn load_store(path: Option<&Path>) -> Result<Option<SummaryStore>> {
    path.map(SummaryStore::load).transpose()
}

fn synth(a: &SynthArgs) -> Result<()> {
    if a.patients == 0 || a.days <= a.test_days {
        return Err(CoreError::Config(format!(
            "need at least one patient and more days ({}) than test days ({})",
            a.days, a.test_days
        )));
    }
    let cohort = generate_synthetic_cohort(a.patients, a.days, a.seed);
    let (train, test) = split_by_days(&cohort, a.test_days);
    write_csv(&train, &a.out.join("train.csv"))?;
    write_csv(&test, &a.out.join("test.csv"))?;
    Ok(())
}

fn contextualize(a: &ContextArgs) -> Result<()> {
    let mut series = ingest_csv(&a.train, Split::Train)?;
    if let Some(test) = &a.test {
        series.extend(ingest_csv(test, Split::Test)?);
    }
    let windows = windows_from_series(&series, 1, a.max_gap);
    let name = match a.backend {
        Backend::Rule => "rule",
        Backend::Remote => "remote",
    };
    let remote = RemoteConfig {
        cache_dir: a.cache.clone(),
        parallelism: a.parallelism,
        fail_hard: a.fail_hard,
        ..RemoteConfig::from_env()
    };
    let summarizer = summarizer_registry().build(name, &SummarizerConfig { remote })?;
    let summaries = summarize_windows(summarizer.as_ref(), &windows, a.parallelism)?;
    SummaryStore::from_summaries(&windows, summaries).save(&a.out)
}

fn train(a: &TrainArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let series = ingest_csv(&a.train, Split::Train)?;
    let store = if cfg.model_config().uses_context() {
        load_store(a.summaries.as_deref())?
    } else {
        None
    };
    let summary = train_run(&cfg, &series, store.as_ref(), &a.out)?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(())
}

fn forecast(a: &ForecastArgs) -> Result<()> {
    let series = ingest_csv(&a.data, Split::Test)?;
    let store = load_store(a.summaries.as_deref())?;
    let (preds, refs) = forecast_run(&a.run, &series, store.as_ref())?;
    preds.save(&a.out)?;
    if let Some(path) = &a.references {
        refs.save(path)?;
    }
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let report = evaluate_tables(&ForecastTable::load(&a.predictions)?, &ForecastTable::load(&a.references)?)?;
    report.save(&a.out)?;
    for h in &report.horizons {
        println!("{:>3} min  rmse {:.3}  mae {:.3}  n {}", h.horizon_min, h.pooled.rmse, h.pooled.mae, h.pooled.n);
    }
    Ok(())
}

fn ablate(a: &AblateArgs) -> Result<()> {
    let cfg = a.cfg.resolve()?;
    let train = ingest_csv(&a.train, Split::Train)?;
    let test = ingest_csv(&a.test, Split::Test)?;
    let store = load_store(a.summaries.as_deref())?;
    let rows = run_ablation(&cfg, &train, &test, store.as_ref(), &a.out)?;
    print!("{}", cgmrag::train::ablation_csv(&rows));
    Ok(())
}

fn plot(a: &PlotArgs) -> Result<()> {
    let n = plot::write_plots(&ForecastTable::load(&a.predictions)?, &ForecastTable::load(&a.references)?, &a.out, a.max_windows)?;
    println!("{n} windows");
    Ok(())
}

fn exit_code(e: &CoreError) -> u8 {
    match e.class() {
        ErrorClass::MissingArtifact => 3,
        ErrorClass::HashMismatch => 4,
        ErrorClass::Config => 5,
        ErrorClass::Data => 6,
        ErrorClass::Other => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synth(a) => synth(a),
        Command::Contextualize(a) => contextualize(a),
        Command::Train(a) => train(a),
        Command::Forecast(a) => forecast(a),
        Command::Eval(a) => eval(a),
        Command::Ablate(a) => ablate(a),
        Command::Plot(a) => plot(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", serde_json::json!({"error": e.kind_name(), "message": e.to_string()}));
            ExitCode::from(exit_code(&e))
        }
    }
}
