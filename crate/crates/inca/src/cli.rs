//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, missing input
//! files), 2 on runtime failures, reported as `error: <ErrorName>: <message>`.
//! Results go to stdout, diagnostics to stderr.

use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use inca_core::eval::split_tasks;
use inca_core::llm::MockLlm;
use inca_core::prompt::PromptWording;
use inca_core::{ChatClient, DeterministicEmbedder, Embedder, InCASystem, PipelineConfig};
use serde::Serialize;

use crate::cache::{CachedEmbedder, EmbeddingCache};
use crate::dataset::{load_dataset, Dataset, Split};
use crate::error::Error;
use crate::harness::{self, Aggregate, BufferSize, CilOptions, EvalReport, ReportFile};
use crate::remote::{self, EndpointConfig, RemoteChatClient, RemoteEmbedder};
use crate::store::{self, StateDocument};

#[derive(Debug, Parser, Serialize)]
#[command(
    name = "inca",
    version,
    about = "Class-incremental text classification with an external continual learner and an LLM"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Learn every class of a training set and save the state.
    Learn(LearnArgs),
    /// Classify --text or one text per stdin line with a saved state.
    Predict(PredictArgs),
    /// Full class-incremental run over one or more task splits.
    Eval(EvalArgs),
    /// ECL and text-retriever recall@k curves.
    Recall(RecallArgs),
    /// Choose k on the validation records of a dataset.
    SweepK(SweepArgs),
    /// Print the class table and covariance diagnostics of a state.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BackendArgs {
    /// Offline deterministic embedder and oracle mock LLM. No network I/O.
    #[arg(long, conflicts_with_all = ["chat_model", "embed_model"])]
    pub mock: bool,
    /// Chat model id sent to $INCA_CHAT_ENDPOINT.
    #[arg(long)]
    pub chat_model: Option<String>,
    /// Embedding model id sent to $INCA_EMBED_ENDPOINT.
    #[arg(long)]
    pub embed_model: Option<String>,
    /// Embedding dimension (mock default 384, remote endpoints are probed).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub embed_dim: Option<u64>,
    /// Seed of the mock embedder.
    #[arg(long, default_value_t = 0, requires = "mock")]
    pub embed_seed: u64,
    /// JSONL of {"text","label"} the mock LLM treats as ground truth.
    #[arg(long, requires = "mock")]
    pub oracle_labels: Option<PathBuf>,
    /// Context window, in tokens, declared by the chat backend.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub context_window: Option<u64>,
    /// Upper bound on concurrent backend requests.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_in_flight: u64,
    /// Persistent embedding cache (JSON Lines).
    #[arg(long)]
    pub cache: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum Wording {
    Intent,
    Topic,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    /// Number of candidate classes given to the predictor.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Training examples sampled per class for its summary.
    #[arg(long, default_value_t = 20, value_parser = clap::value_parser!(u64).range(1..))]
    pub summary_sample_size: u64,
    #[arg(long, value_enum, default_value_t = Wording::Intent)]
    pub wording: Wording,
    /// Put every class summary in the prediction prompt instead of routing.
    #[arg(long)]
    pub long_context: bool,
    /// With k = 1, return the routed class without calling the predictor.
    #[arg(long)]
    pub skip_llm_when_k1: bool,
}

impl PipelineArgs {
    fn config(&self, seed: u64) -> PipelineConfig {
        PipelineConfig {
            k: self.k as usize,
            summary_sample_size: self.summary_sample_size as usize,
            long_context: self.long_context,
            skip_llm_when_k1: self.skip_llm_when_k1,
            seed,
            wording: match self.wording {
                Wording::Intent => PromptWording::intent(),
                Wording::Topic => PromptWording::topic(),
            },
            ..PipelineConfig::default()
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct LearnArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub state: PathBuf,
    /// Number of tasks the classes are split into; classes are learned task by task.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub tasks: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub state: PathBuf,
    /// Text to classify; without it, one text per stdin line.
    #[arg(long)]
    pub text: Option<String>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: Option<u64>,
    #[arg(long)]
    pub long_context: bool,
    /// Print the full prediction as one JSON object per line.
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub tasks: u64,
    /// Task-split seeds, one run each.
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
    pub seeds: Vec<u64>,
    /// Directory for report.json, report.csv and config.json.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Also run the text retriever with this buffer (0 = summaries, N, full).
    #[arg(long, value_parser = parse_buffer)]
    pub tr_buffer: Option<BufferSize>,
    /// Fraction of training records held out per label when the dataset has no test split.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub max_recall_k: u64,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize, PartialEq, Eq)]
pub enum Method {
    Ecl,
    Tr,
    Both,
}

#[derive(Debug, Args, Serialize)]
pub struct RecallArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub tasks: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5, 10])]
    pub k_values: Vec<usize>,
    /// Text-retriever buffer sizes: 0 (summaries), N per class, or full.
    #[arg(long, value_delimiter = ',', value_parser = parse_buffer, default_values_t = [BufferSize::Summaries])]
    pub buffers: Vec<BufferSize>,
    #[arg(long, value_enum, default_value_t = Method::Both)]
    pub method: Method,
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Directory for recall.json, recall.csv and config.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct SweepArgs {
    #[arg(long)]
    pub state: PathBuf,
    /// Dataset whose validation records are used.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 3, 4, 5])]
    pub k_values: Vec<usize>,
    #[command(flatten)]
    pub backend: BackendArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct InspectArgs {
    #[arg(long)]
    pub state: PathBuf,
}

fn parse_buffer(s: &str) -> Result<BufferSize, String> {
    BufferSize::parse(s)
        .ok_or_else(|| format!("expected 0, a positive count or \"full\", got {s:?}"))
}

enum Failure {
    Usage(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<inca_core::Error> for Failure {
    fn from(e: inca_core::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type CliResult<T = ()> = Result<T, Failure>;

struct Io<'a> {
    stdin: &'a mut dyn BufRead,
    stdout: &'a mut dyn Write,
}

impl Io<'_> {
    fn println(&mut self, line: &str) -> CliResult {
        writeln!(self.stdout, "{line}").map_err(|e| Failure::Runtime(Error::io("<stdout>", e)))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(
    args: I,
    stdin: &mut dyn BufRead,
    stdout: &mut dyn Write,
    stderr: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(stderr, "{}", e.render());
                    1
                }
            };
        }
    };
    let mut io = Io { stdin, stdout };
    match dispatch(&cli, &mut io) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(
                stderr,
                "error: {msg}\n\nFor more information, try '--help'."
            );
            1
        }
        Err(Failure::Runtime(e)) => {
            let _ = writeln!(stderr, "error: {}: {e}", e.name());
            2
        }
    }
}

fn dispatch(cli: &Cli, io: &mut Io<'_>) -> CliResult {
    match &cli.command {
        Command::Learn(a) => learn(cli, a, io),
        Command::Predict(a) => predict(a, io),
        Command::Eval(a) => eval(cli, a, io),
        Command::Recall(a) => recall(cli, a, io),
        Command::SweepK(a) => sweep(a, io),
        Command::Inspect(a) => inspect(a, io),
    }
}

fn require_file(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "{what} {} does not exist or is not a file",
            path.display()
        )))
    }
}

fn require_parent_dir(path: &Path, what: &str) -> CliResult {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if parent.is_dir() {
        Ok(())
    } else {
        Err(Failure::Usage(format!(
            "directory for {what} {} does not exist",
            path.display()
        )))
    }
}

/// Creates the output directory if needed; an existing non-directory is a usage error.
fn require_dir(path: &Path, what: &str) -> CliResult {
    if path.exists() && !path.is_dir() {
        return Err(Failure::Usage(format!(
            "{what} {} is not a directory",
            path.display()
        )));
    }
    std::fs::create_dir_all(path).map_err(|e| Failure::Runtime(Error::io(path, e)))
}

fn check_backend_paths(b: &BackendArgs) -> CliResult {
    if let Some(p) = &b.oracle_labels {
        require_file(p, "oracle label file")?;
    }
    if let Some(p) = &b.cache {
        require_parent_dir(p, "embedding cache")?;
    }
    if !b.mock && (b.chat_model.is_none() || b.embed_model.is_none()) {
        return Err(Failure::Usage(
            "either --mock or both --chat-model and --embed-model are required".into(),
        ));
    }
    Ok(())
}

struct Backends {
    embedder: Arc<dyn Embedder>,
    chat: Arc<dyn ChatClient>,
}

const MOCK_DIMENSION: usize = 384;

/// Builds the backends; every path must already be validated because the
/// remote embedder may touch the network here.
fn backends(b: &BackendArgs, state_dimension: Option<usize>) -> CliResult<Backends> {
    let dimension = b.embed_dim.map(|d| d as usize).or(state_dimension);
    let max_in_flight = b.max_in_flight as usize;
    let context_window = b.context_window.map(|w| w as usize);
    let (embedder, chat): (Arc<dyn Embedder>, Arc<dyn ChatClient>) = if b.mock {
        remote::forbid_network();
        let mut llm = MockLlm::new();
        if let Some(path) = &b.oracle_labels {
            let labels = load_dataset(path)?;
            llm = llm.with_labels(
                labels
                    .records()
                    .iter()
                    .map(|r| (r.text.clone(), r.label.clone())),
            );
        }
        if let Some(w) = context_window {
            llm = llm.with_context_window(w);
        }
        let embedder =
            DeterministicEmbedder::new(b.embed_seed, dimension.unwrap_or(MOCK_DIMENSION))?;
        (Arc::new(embedder), Arc::new(llm))
    } else {
        let endpoint = |var: &str, model: &str| {
            EndpointConfig::from_env(var, model)
                .map(|mut c| {
                    c.max_in_flight = max_in_flight;
                    c
                })
                .map_err(Failure::Usage)
        };
        let chat_cfg = endpoint(
            remote::ENV_CHAT_ENDPOINT,
            b.chat_model.as_deref().unwrap_or_default(),
        )?;
        let embed_cfg = endpoint(
            remote::ENV_EMBED_ENDPOINT,
            b.embed_model.as_deref().unwrap_or_default(),
        )?;
        let chat = RemoteChatClient::new(chat_cfg, context_window);
        let embedder = RemoteEmbedder::new(embed_cfg, dimension)?;
        (Arc::new(embedder), Arc::new(chat))
    };
    let embedder: Arc<dyn Embedder> = match &b.cache {
        Some(path) => {
            let cache = Arc::new(EmbeddingCache::open(path)?);
            Arc::new(CachedEmbedder::new(embedder, cache))
        }
        None => embedder,
    };
    Ok(Backends { embedder, chat })
}

#[derive(Serialize)]
struct Snapshot<'a> {
    version: &'a str,
    #[serde(flatten)]
    invocation: &'a Cli,
    embedder: &'a str,
    chat: &'a str,
}

fn write_snapshot(cli: &Cli, backends: &Backends, path: &Path) -> CliResult {
    let snapshot = Snapshot {
        version: env!("CARGO_PKG_VERSION"),
        invocation: cli,
        embedder: backends.embedder.identity(),
        chat: backends.chat.identity(),
    };
    Ok(harness::write_json(&snapshot, path)?)
}

fn load_with_holdout(path: &Path, holdout: f64) -> CliResult<Dataset> {
    if !(0.0..1.0).contains(&holdout) {
        return Err(Failure::Usage(format!(
            "--holdout must be in [0, 1), got {holdout}"
        )));
    }
    Ok(load_dataset(path)?.with_holdout(holdout, 0)?)
}

fn learn(cli: &Cli, a: &LearnArgs, io: &mut Io<'_>) -> CliResult {
    require_file(&a.dataset, "dataset")?;
    require_parent_dir(&a.state, "state")?;
    check_backend_paths(&a.backend)?;
    let dataset = load_dataset(&a.dataset)?;
    let b = backends(&a.backend, None)?;
    let split = split_tasks(&dataset.labels(), a.tasks as usize, a.seed)?;
    let mut system = InCASystem::new(
        b.embedder.clone(),
        b.chat.clone(),
        b.chat.clone(),
        a.pipeline.config(a.seed),
    )?;
    harness::learn_split(&mut system, &dataset, &split)?;
    store::save(&system, &a.state)?;
    let mut snapshot = a.state.clone().into_os_string();
    snapshot.push(".config.json");
    write_snapshot(cli, &b, Path::new(&snapshot))?;
    io.println(&format!(
        "learned {} classes into {}",
        system.registry().len(),
        a.state.display()
    ))
}

fn load_system(state: &Path, backend: &BackendArgs) -> CliResult<InCASystem> {
    require_file(state, "state")?;
    check_backend_paths(backend)?;
    let doc = store::load(state)?;
    let b = backends(backend, Some(doc.dimension()))?;
    Ok(doc.into_system(b.embedder, b.chat.clone(), b.chat)?)
}

fn predict(a: &PredictArgs, io: &mut Io<'_>) -> CliResult {
    let mut system = load_system(&a.state, &a.backend)?;
    if let Some(k) = a.k {
        system.set_k(k as usize)?;
    }
    if a.long_context {
        system.set_long_context(true);
    }
    let texts: Vec<String> = match &a.text {
        Some(t) => vec![t.clone()],
        None => {
            let mut lines = Vec::new();
            for line in io.stdin.lines() {
                let line = line.map_err(|e| Failure::Runtime(Error::io("<stdin>", e)))?;
                if !line.trim().is_empty() {
                    lines.push(line);
                }
            }
            lines
        }
    };
    for text in texts {
        let prediction = system.classify(&text)?;
        let line = if a.json {
            serde_json::to_string(&prediction).expect("predictions serialize")
        } else {
            prediction.label.unwrap_or_else(|| "NO_MATCH".into())
        };
        io.println(&line)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    final_accuracy: f64,
    recall_at_k: std::collections::BTreeMap<usize, f64>,
    report: &'a Path,
}

fn eval(cli: &Cli, a: &EvalArgs, io: &mut Io<'_>) -> CliResult {
    require_file(&a.dataset, "dataset")?;
    require_dir(&a.out, "--out")?;
    check_backend_paths(&a.backend)?;
    if a.seeds.is_empty() {
        return Err(Failure::Usage("--seeds needs at least one seed".into()));
    }
    let dataset = load_with_holdout(&a.dataset, a.holdout)?;
    let b = backends(&a.backend, None)?;
    write_snapshot(cli, &b, &a.out.join("config.json"))?;
    let options = CilOptions {
        max_recall_k: a.max_recall_k as usize,
        max_in_flight: a.backend.max_in_flight as usize,
    };
    let labels = dataset.labels();
    let report_path = a.out.join("report.json");
    let mut runs: Vec<EvalReport> = Vec::new();
    let mut tr = Vec::new();
    let mut failure = None;
    for &seed in &a.seeds {
        let split = split_tasks(&labels, a.tasks as usize, seed)?;
        let mut system = InCASystem::new(
            b.embedder.clone(),
            b.chat.clone(),
            b.chat.clone(),
            a.pipeline.config(seed),
        )?;
        match harness::run_cil(&mut system, &dataset, &split, &options) {
            Ok(report) => runs.push(report),
            Err(aborted) => {
                runs.push(aborted.partial);
                failure = Some(aborted.error);
                break;
            }
        }
        if let Some(buffer) = a.tr_buffer {
            let k_values: Vec<usize> = (1..=options.max_recall_k.min(labels.len())).collect();
            let summaries = harness::learned_summaries(&system);
            tr.push(harness::run_tr_baseline(
                &dataset,
                &split,
                buffer,
                &k_values,
                seed,
                &*b.embedder,
                &summaries,
            )?);
        }
        log::info!(
            "seed {seed}: final accuracy {:.4}",
            runs.last().unwrap().final_accuracy
        );
    }
    let complete: Vec<EvalReport> = runs.iter().filter(|r| r.complete).cloned().collect();
    let aggregate = Aggregate::from_runs(a.pipeline.k as usize, &complete, &tr);
    let file = ReportFile {
        seeds: a.seeds.clone(),
        runs,
        tr_recall: tr,
        aggregate,
    };
    harness::write_json(&file, &report_path)?;
    harness::write_csv(&file.aggregate.csv_rows(), &a.out.join("report.csv"))?;
    if let Some(e) = failure {
        return Err(Failure::Runtime(e));
    }
    let summary = EvalSummary {
        final_accuracy: file.aggregate.final_accuracy.mean,
        recall_at_k: file
            .aggregate
            .recall_at_k
            .iter()
            .map(|(k, s)| (*k, s.mean))
            .collect(),
        report: &report_path,
    };
    io.println(&serde_json::to_string(&summary).expect("summaries serialize"))
}

#[derive(Serialize)]
struct RecallOutput {
    seed: u64,
    ecl: Option<std::collections::BTreeMap<usize, f64>>,
    tr: std::collections::BTreeMap<String, std::collections::BTreeMap<usize, f64>>,
}

fn recall(cli: &Cli, a: &RecallArgs, io: &mut Io<'_>) -> CliResult {
    require_file(&a.dataset, "dataset")?;
    if let Some(out) = &a.out {
        require_dir(out, "--out")?;
    }
    check_backend_paths(&a.backend)?;
    if a.k_values.is_empty() || a.k_values.contains(&0) {
        return Err(Failure::Usage("--k-values must be positive".into()));
    }
    let dataset = load_with_holdout(&a.dataset, a.holdout)?;
    let b = backends(&a.backend, None)?;
    let split = split_tasks(&dataset.labels(), a.tasks as usize, a.seed)?;
    let mut system = InCASystem::new(
        b.embedder.clone(),
        b.chat.clone(),
        b.chat.clone(),
        a.pipeline.config(a.seed),
    )?;
    let needs_learning = a.method != Method::Tr || a.buffers.contains(&BufferSize::Summaries);
    if needs_learning {
        harness::learn_split(&mut system, &dataset, &split)?;
    }
    let test: Vec<_> = dataset.split(Split::Test).collect();
    let ecl = if a.method == Method::Tr {
        None
    } else {
        Some(harness::ecl_recall(
            &system,
            &test,
            &a.k_values,
            a.backend.max_in_flight as usize,
        )?)
    };
    let mut tr = std::collections::BTreeMap::new();
    if a.method != Method::Ecl {
        let summaries = harness::learned_summaries(&system);
        for buffer in &a.buffers {
            let curve = harness::run_tr_baseline(
                &dataset,
                &split,
                *buffer,
                &a.k_values,
                a.seed,
                &*b.embedder,
                &summaries,
            )?;
            tr.insert(buffer.to_string(), curve);
        }
    }
    let output = RecallOutput {
        seed: a.seed,
        ecl,
        tr,
    };
    if let Some(out) = &a.out {
        write_snapshot(cli, &b, &out.join("config.json"))?;
        harness::write_json(&output, &out.join("recall.json"))?;
        let mut rows = Vec::new();
        let row = |k: usize, metric: String, v: f64| harness::CsvRow {
            k,
            metric,
            mean: v,
            stddev: 0.0,
            runs: 1,
        };
        if let Some(curve) = &output.ecl {
            rows.extend(curve.iter().map(|(k, v)| row(*k, "recall".into(), *v)));
        }
        for (buffer, curve) in &output.tr {
            rows.extend(
                curve
                    .iter()
                    .map(|(k, v)| row(*k, format!("tr_recall@buffer={buffer}"), *v)),
            );
        }
        harness::write_csv(&rows, &out.join("recall.csv"))?;
    }
    io.println(&serde_json::to_string(&output).expect("recall output serializes"))
}

fn sweep(a: &SweepArgs, io: &mut Io<'_>) -> CliResult {
    require_file(&a.dataset, "dataset")?;
    if a.k_values.is_empty() || a.k_values.contains(&0) {
        return Err(Failure::Usage("--k-values must be positive".into()));
    }
    let system = load_system(&a.state, &a.backend)?;
    let dataset = load_dataset(&a.dataset)?;
    let validation: Vec<_> = dataset.split(Split::Validation).collect();
    if validation.is_empty() {
        return Err(Failure::Runtime(Error::InvalidArgument(format!(
            "{} has no validation records",
            a.dataset.display()
        ))));
    }
    let result = harness::sweep_k(
        &system,
        &validation,
        &a.k_values,
        a.backend.max_in_flight as usize,
    )?;
    io.println(&serde_json::to_string(&result).expect("sweep results serialize"))
}

/// Condition number of Σ + εI, the matrix that is actually inverted.
pub fn condition_number(doc: &StateDocument) -> Option<f64> {
    let h = doc.dimension();
    if doc.classes.is_empty() || h == 0 {
        return None;
    }
    let registry = doc.to_registry().ok()?;
    let eps = registry
        .shared()
        .regularization()
        .epsilon_for(registry.shared().matrix());
    let m = nalgebra::DMatrix::from_row_slice(h, h, &doc.shared_covariance.matrix)
        + nalgebra::DMatrix::identity(h, h) * eps;
    let eig = m.symmetric_eigenvalues();
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &l| {
        (lo.min(l), hi.max(l))
    });
    Some(if lo > 0.0 { hi / lo } else { f64::INFINITY })
}

fn inspect(a: &InspectArgs, io: &mut Io<'_>) -> CliResult {
    require_file(&a.state, "state")?;
    let size = std::fs::metadata(&a.state)
        .map_err(|e| Error::io(&a.state, e))?
        .len();
    let doc = store::load(&a.state)?;
    io.println(&format!("state        {}", a.state.display()))?;
    io.println(&format!("size_bytes   {size}"))?;
    io.println(&format!("embedder     {}", doc.embedder.identity))?;
    io.println(&format!("dimension    {}", doc.dimension()))?;
    io.println(&format!("classes      {}", doc.classes.len()))?;
    let cond = condition_number(&doc).map_or_else(|| "n/a".to_string(), |c| format!("{c:.6e}"));
    io.println(&format!("condition    {cond}"))?;
    io.println("")?;
    io.println("id\tindex\ttags\tname\tsummary")?;
    for c in &doc.classes {
        let summary: String = c
            .summary
            .chars()
            .take(60)
            .collect::<String>()
            .replace(['\n', '\t'], " ");
        io.println(&format!(
            "{}\t{}\t{}\t{}\t{}",
            c.class_id, c.insertion_index, c.tag_count, c.name, summary
        ))?;
    }
    Ok(())
}
