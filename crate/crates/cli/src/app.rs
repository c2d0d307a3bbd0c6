//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use gnssrag_core::promptkit::{DetailLevel, GenParams};
use gnssrag_core::projection::TsneParams;
use gnssrag_core::signalgen::{generate_dataset, Dataset, DatasetConfig, InterferenceType};
use gnssrag_core::tasks::{save_predictions, score_predictions, Prediction};
use gnssrag_core::vectorstore::Metric;
use serde::Serialize;

use crate::bench::{self, LatencyConfig};
use crate::config::PipelineConfig;
use crate::error::{exit, AppError, AtStage, Stage};
use crate::indexing::{build_index, embed_records, split_per_class};
use crate::pipeline::{ClassifyInput, Embedder, Pipeline, QueryOutcome, QueryRequest, SnapshotInput};
use crate::projection::{project_dataset, write_outputs, ProjectionJob};
use crate::service;

pub const DEFAULT_QUESTION: &str = "What interference is present in this snapshot?";

#[derive(Debug, Parser)]
#[command(name = "gnssrag", version, about = "Retrieval-grounded GNSS interference characterization")]
pub struct Cli {
    /// Pipeline config (TOML). Falls back to $GNSSRAG_CONFIG, then ./gnssrag.toml.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Index file; overrides the config.
    #[arg(long, global = true, value_name = "PATH")]
    pub index: Option<PathBuf>,
    /// Dataset directory; overrides the config.
    #[arg(long, global = true, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a labeled snapshot dataset.
    Generate(GenerateArgs),
    /// Embed one snapshot and print the vector as JSON.
    Embed(EmbedArgs),
    /// Embed a dataset into a vector index file.
    Index(IndexArgs),
    /// Describe a snapshot using retrieved context.
    Query(QueryArgs),
    /// Predict type, subjammer, power and bandwidth by k-NN.
    Classify(ClassifyArgs),
    /// Accuracy and latency benchmarks.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// 2-D t-SNE view of dataset embeddings.
    Tsne(TsneArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Output directory; defaults to the configured dataset.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub per_class: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct SnapshotArgs {
    /// Snapshot id in the dataset (or, failing that, in the index).
    #[arg(long)]
    pub id: Option<u64>,
    /// Snapshot file.
    #[arg(long, value_name = "PATH")]
    pub snapshot: Option<PathBuf>,
}

impl SnapshotArgs {
    fn input(&self) -> SnapshotInput {
        match (&self.id, &self.snapshot) {
            (Some(id), _) => SnapshotInput::Id(*id),
            (None, Some(path)) => SnapshotInput::Path(path.clone()),
            (None, None) => unreachable!("clap requires one of --id and --snapshot"),
        }
    }
}

#[derive(Debug, Args)]
pub struct EmbedArgs {
    #[command(flatten)]
    pub source: SnapshotArgs,
}

#[derive(Debug, Args)]
pub struct IndexArgs {
    /// Output file; defaults to the configured index.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "cosine")]
    pub metric: String,
    /// Leave the last N snapshots of every class out of the index.
    #[arg(long, default_value_t = 0)]
    pub holdout_per_class: usize,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[command(flatten)]
    pub source: SnapshotArgs,
    #[arg(long, default_value = DEFAULT_QUESTION)]
    pub question: String,
    /// general, signal_info_general, signal_info_detailed or general_with_interpretation.
    #[arg(long, default_value = "general")]
    pub detail_level: String,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub top_k: Option<u32>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
    /// Task instruction prompt only, no retrieval.
    #[arg(long)]
    pub no_context: bool,
    #[arg(long)]
    pub json: bool,
    /// Report per-stage latency.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct ClassifySource {
    #[arg(long)]
    pub id: Option<u64>,
    #[arg(long, value_name = "PATH")]
    pub snapshot: Option<PathBuf>,
    /// JSON file holding an embedding as an array of numbers.
    #[arg(long, value_name = "PATH")]
    pub vector: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    #[command(flatten)]
    pub source: ClassifySource,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum BenchCommand {
    /// Train/test split of the dataset, k-NN scores and the leave-one-in check.
    Accuracy(AccuracyArgs),
    /// Score an external prediction CSV.
    Score(ScoreArgs),
    /// Median embed plus search time over a large synthetic index.
    Latency(LatencyArgs),
}

#[derive(Debug, Args)]
pub struct AccuracyArgs {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value = "cosine")]
    pub metric: String,
    /// Cap on indexed snapshots per class.
    #[arg(long)]
    pub train_per_class: Option<usize>,
    #[arg(long, default_value_t = 50)]
    pub test_per_class: usize,
    /// Write per-item predictions as CSV.
    #[arg(long, value_name = "PATH")]
    pub predictions: Option<PathBuf>,
    /// Write the report as JSON.
    #[arg(long, value_name = "PATH")]
    pub metrics_out: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long, value_name = "PATH")]
    pub predictions: PathBuf,
}

#[derive(Debug, Args)]
pub struct LatencyArgs {
    #[arg(long, default_value_t = bench::REFERENCE_CORPUS_RECORDS)]
    pub records: usize,
    #[arg(long, default_value_t = 100)]
    pub queries: usize,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct TsneArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated interference types; defaults to four jammer types.
    #[arg(long, value_delimiter = ',')]
    pub classes: Vec<String>,
    #[arg(long, default_value_t = 100)]
    pub per_class: usize,
    #[arg(long)]
    pub perplexity: Option<f64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn main_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::SUCCESS };
        }
    };
    init_logging(cli.verbose);
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match run(&cli, &mut out) {
        Ok(()) => exit::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
}

fn config_for(cli: &Cli) -> Result<PipelineConfig, AppError> {
    let mut config = PipelineConfig::discover(cli.config.as_deref())?;
    if let Some(index) = &cli.index {
        config.index = Some(index.clone());
    }
    if let Some(dataset) = &cli.dataset {
        config.dataset = Some(dataset.clone());
    }
    Ok(config)
}

fn print_json<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), AppError> {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    writeln!(out, "{text}").map_err(stdout_error)
}

fn stdout_error(e: io::Error) -> AppError {
    AppError::io(Path::new("<stdout>"), e)
}

fn parse_metric(text: &str) -> Result<Metric, AppError> {
    text.parse().map_err(|e: gnssrag_core::Error| AppError::Usage(e.to_string()))
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<(), AppError> {
    let config = config_for(cli)?;
    match &cli.command {
        Command::Generate(args) => generate(&config, args, out),
        Command::Embed(args) => embed(&config, args, out),
        Command::Index(args) => index(&config, args, out),
        Command::Query(args) => query(&config, args, out),
        Command::Classify(args) => classify(&config, args, out),
        Command::Bench(BenchCommand::Accuracy(args)) => accuracy(&config, args, out),
        Command::Bench(BenchCommand::Score(args)) => {
            let metrics = score_predictions(&args.predictions).at(Stage::Evaluate)?;
            print_json(out, &metrics)
        }
        Command::Bench(BenchCommand::Latency(args)) => latency(args, out),
        Command::Tsne(args) => tsne(&config, args, out),
        Command::Serve(args) => serve(&config, args, out),
    }
}

#[derive(Serialize)]
struct GenerateSummary<'a> {
    root: &'a Path,
    total: usize,
    counts: &'a std::collections::BTreeMap<InterferenceType, usize>,
}

fn generate(config: &PipelineConfig, args: &GenerateArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let root = match &args.out {
        Some(p) => p.as_path(),
        None => config.dataset_path()?,
    };
    let dataset_config = DatasetConfig::uniform(args.per_class, args.seed);
    let manifest = generate_dataset(&dataset_config, root).at(Stage::Write)?;
    let summary = GenerateSummary {
        root,
        total: manifest.len(),
        counts: &manifest.counts,
    };
    if args.json {
        return print_json(out, &summary);
    }
    writeln!(out, "wrote {} snapshots to {}", summary.total, root.display()).map_err(stdout_error)?;
    for (ty, n) in summary.counts {
        writeln!(out, "  {ty}: {n}").map_err(stdout_error)?;
    }
    Ok(())
}

fn load_input_snapshot(config: &PipelineConfig, input: &SnapshotInput) -> Result<gnssrag_core::signalgen::Snapshot, AppError> {
    match input {
        SnapshotInput::Id(id) => {
            let dataset = Dataset::open(config.dataset_path()?).at(Stage::Load)?;
            if !dataset.contains(*id) {
                return Err(AppError::NotFound(*id));
            }
            dataset.load(*id).at(Stage::Load)
        }
        SnapshotInput::Path(path) => gnssrag_core::signalgen::read_snapshot(path).at(Stage::Load),
        SnapshotInput::Inline(_) => unreachable!("the CLI takes ids and paths"),
    }
}

fn embed(config: &PipelineConfig, args: &EmbedArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let snap = load_input_snapshot(config, &args.source.input())?;
    let embedding = Embedder::from_config(config)?.embed(&snap).at(Stage::Embed)?;
    #[derive(Serialize)]
    struct Output<'a> {
        snapshot_id: u64,
        source: gnssrag_core::embedder::EmbeddingSource,
        vector: &'a [f32],
    }
    print_json(
        out,
        &Output {
            snapshot_id: embedding.snapshot_id,
            source: embedding.source,
            vector: embedding.vector(),
        },
    )
}

fn index(config: &PipelineConfig, args: &IndexArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let metric = parse_metric(&args.metric)?;
    let path = match &args.out {
        Some(p) => p.as_path(),
        None => config.index_path()?,
    };
    let dataset = Dataset::open(config.dataset_path()?).at(Stage::Load)?;
    let split = split_per_class(dataset.manifest(), None, args.holdout_per_class);
    let embedder = Embedder::from_config(config)?;
    let index = build_index(&dataset, &split.train, &embedder, metric)?;
    index.save(path).at(Stage::Write)?;
    log::info!("indexed {} snapshots, held out {}", split.train.len(), split.test.len());
    #[derive(Serialize)]
    struct Summary<'a> {
        path: &'a Path,
        records: usize,
        held_out: &'a [u64],
        metric: Metric,
    }
    let summary = Summary {
        path,
        records: index.len(),
        held_out: &split.test,
        metric,
    };
    if args.json {
        return print_json(out, &summary);
    }
    writeln!(
        out,
        "indexed {} snapshots ({metric}) into {}; {} held out",
        summary.records,
        path.display(),
        split.test.len()
    )
    .map_err(stdout_error)
}

fn gen_params(config: &PipelineConfig, args: &QueryArgs) -> GenParams {
    let mut params = config.params;
    if let Some(t) = args.temperature {
        params.temperature = t;
    }
    if let Some(k) = args.top_k {
        params.top_k = k;
    }
    if let Some(m) = args.max_tokens {
        params.max_tokens = m;
    }
    params
}

/// Builds the query request for `args`.
pub fn query_request(config: &PipelineConfig, args: &QueryArgs) -> Result<QueryRequest, AppError> {
    let detail_level: DetailLevel = args
        .detail_level
        .parse()
        .map_err(|e: gnssrag_core::Error| AppError::Usage(e.to_string()))?;
    Ok(QueryRequest {
        input: args.source.input(),
        question: args.question.clone(),
        detail_level,
        k: args.k,
        params: Some(gen_params(config, args)),
        retrieve: !args.no_context,
    })
}

fn write_query_text(out: &mut dyn Write, outcome: &QueryOutcome, timings: bool) -> io::Result<()> {
    writeln!(out, "{}", outcome.description.text)?;
    if let Some(ctx) = &outcome.context {
        writeln!(out)?;
        writeln!(out, "retrieved context (k={}, {}):", ctx.hits.len(), ctx.provenance.metric)?;
        for line in ctx.neighbor_lines() {
            writeln!(out, "  {line}")?;
        }
    }
    if timings {
        let t = &outcome.timings;
        writeln!(out)?;
        writeln!(
            out,
            "timings (ms): load {:.3}, embed {:.3}, retrieve {:.3}, assemble {:.3}, describe {:.3}, total {:.3}",
            t.load_ms, t.embed_ms, t.retrieve_ms, t.assemble_ms, t.describe_ms, t.total_ms
        )?;
    }
    Ok(())
}

fn query(config: &PipelineConfig, args: &QueryArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let request = query_request(config, args)?;
    let pipeline = Pipeline::open(config)?;
    let outcome = pipeline.query(&request)?;
    if args.json {
        return print_json(out, &outcome.report(args.timings));
    }
    write_query_text(out, &outcome, args.timings).map_err(stdout_error)
}

fn read_vector(path: &Path) -> Result<Vec<f32>, AppError> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| AppError::BadInput {
        field: "vector",
        reason: e.to_string(),
    })?;
    // accept a bare array or the `embed` output
    let array = value.get("vector").unwrap_or(&value);
    serde_json::from_value(array.clone()).map_err(|e| AppError::BadInput {
        field: "vector",
        reason: e.to_string(),
    })
}

fn write_prediction(out: &mut dyn Write, p: &Prediction) -> io::Result<()> {
    let votes: Vec<String> = p.votes.iter().map(|(t, n)| format!("{t}={n}")).collect();
    writeln!(out, "type: {} (votes: {})", p.intf_type, votes.join(", "))?;
    writeln!(out, "subjammer: {}", p.subjammer)?;
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    writeln!(out, "power: {}", fmt(p.power))?;
    writeln!(out, "bandwidth: {}", fmt(p.bandwidth))?;
    let ids: Vec<String> = p.neighbor_ids.iter().map(u64::to_string).collect();
    writeln!(out, "neighbors: {}", ids.join(", "))
}

fn classify(config: &PipelineConfig, args: &ClassifyArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let input = match (&args.source.id, &args.source.snapshot, &args.source.vector) {
        (Some(id), _, _) => ClassifyInput::Snapshot(SnapshotInput::Id(*id)),
        (_, Some(path), _) => ClassifyInput::Snapshot(SnapshotInput::Path(path.clone())),
        (_, _, Some(path)) => ClassifyInput::Vector(read_vector(path)?),
        _ => unreachable!("clap requires one source"),
    };
    let pipeline = Pipeline::open(config)?;
    let prediction = pipeline.classify(&input, args.k)?;
    if args.json {
        return print_json(out, &prediction);
    }
    write_prediction(out, &prediction).map_err(stdout_error)
}

fn accuracy(config: &PipelineConfig, args: &AccuracyArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let metric = parse_metric(&args.metric)?;
    let k = args.k.unwrap_or(config.k);
    let dataset = Dataset::open(config.dataset_path()?).at(Stage::Load)?;
    let split = split_per_class(dataset.manifest(), args.train_per_class, args.test_per_class);
    if split.train.is_empty() || split.test.is_empty() {
        return Err(AppError::Usage(format!(
            "split left {} train and {} test snapshots; both must be non-empty",
            split.train.len(),
            split.test.len()
        )));
    }
    let embedder = Embedder::from_config(config)?;
    let train = embed_records(&dataset, &split.train, &embedder)?;
    let test = embed_records(&dataset, &split.test, &embedder)?;
    let (report, evaluation) = bench::accuracy(&train, test, k, metric)?;
    if let Some(path) = &args.predictions {
        save_predictions(path, &evaluation.records).at(Stage::Write)?;
    }
    if let Some(path) = &args.metrics_out {
        let json = serde_json::to_string_pretty(&report).expect("report serializes");
        fs::write(path, json + "\n").map_err(|e| AppError::io(path, e))?;
    }
    if args.json {
        return print_json(out, &report);
    }
    let m = &report.metrics;
    let u = &report.unanimous;
    let mut text = String::new();
    text += &format!("train {} / test {}, k={k}, {metric}\n", report.train, report.test);
    text += &format!("type accuracy      {:.2}%\n", m.type_accuracy);
    text += &format!("subjammer accuracy {:.2}%\n", m.subjammer_accuracy);
    text += &format!("power MSE          {:.4}\n", m.power_mse);
    text += &format!("bandwidth MSE      {:.4}\n", m.bandwidth_mse);
    text += &format!(
        "unanimous subset   n={} power MSE {:.4} bandwidth MSE {:.4}\n",
        u.n, u.power_mse, u.bandwidth_mse
    );
    text += &format!("leave-one-in (k=1) {:.2}%\n", report.leave_one_in_accuracy);
    out.write_all(text.as_bytes()).map_err(stdout_error)
}

fn latency(args: &LatencyArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let report = bench::latency(&LatencyConfig {
        records: args.records,
        queries: args.queries,
        k: args.k,
        seed: args.seed,
    })?;
    if args.json {
        return print_json(out, &report);
    }
    writeln!(
        out,
        "{} queries over {} records, k={}: median {:.3} ms (embed {:.3}, search {:.3}), p95 {:.3} ms, max {:.3} ms; budget {} ms {}",
        args.queries,
        args.records,
        args.k,
        report.median_ms,
        report.embed_median_ms,
        report.search_median_ms,
        report.p95_ms,
        report.max_ms,
        report.budget_ms,
        if report.within_budget() { "met" } else { "missed" }
    )
    .map_err(stdout_error)
}

fn tsne(config: &PipelineConfig, args: &TsneArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let mut job = ProjectionJob {
        per_class: args.per_class,
        ..ProjectionJob::default()
    };
    if !args.classes.is_empty() {
        job.classes = args
            .classes
            .iter()
            .map(|c| c.parse().map_err(|e: gnssrag_core::Error| AppError::Usage(e.to_string())))
            .collect::<Result<_, _>>()?;
    }
    let defaults = TsneParams::default();
    job.params = TsneParams {
        perplexity: args.perplexity.unwrap_or(defaults.perplexity),
        learning_rate: args.learning_rate.unwrap_or(defaults.learning_rate),
        iterations: args.iterations.unwrap_or(defaults.iterations),
        seed: args.seed.unwrap_or(defaults.seed),
        ..defaults
    };
    let dataset = Dataset::open(config.dataset_path()?).at(Stage::Load)?;
    let embedder = Embedder::from_config(config)?;
    let output = project_dataset(&dataset, &embedder, &job)?;
    let paths = write_outputs(&output, &args.out)?;
    let r = &output.report;
    writeln!(
        out,
        "projected {} points (perplexity {:.2}): KL {:.4} -> {:.4}",
        r.n, r.effective_perplexity, r.initial_kl, r.final_kl
    )
    .map_err(stdout_error)?;
    writeln!(out, "note: {}", r.note).map_err(stdout_error)?;
    for p in paths {
        writeln!(out, "wrote {}", p.display()).map_err(stdout_error)?;
    }
    Ok(())
}

fn serve(config: &PipelineConfig, args: &ServeArgs, out: &mut dyn Write) -> Result<(), AppError> {
    let pipeline = Pipeline::open(config)?;
    let size = pipeline.index().len();
    service::serve_forever(pipeline, args.addr, |addr| {
        let _ = writeln!(out, "listening on http://{addr} ({size} indexed records)");
        let _ = out.flush();
    })
    .map_err(|e| AppError::io(Path::new(&args.addr.to_string()), e))
}
