//! Class-incremental evaluation, the text-retriever baseline, k sweeps and
//! report files.
//!
//! `report.json` holds a [`ReportFile`]: every per-seed [`EvalReport`] plus
//! their mean/stddev [`Aggregate`]. `report.csv` is flat, one row per
//! (k, metric) with columns `k,metric,mean,stddev,runs`. The metrics are
//! `final_accuracy` (at the configured k), `recall` (ECL recall@k) and
//! `tr_recall` (text-retriever recall@k). Standard deviations are sample
//! deviations (n − 1), reported as 0 for a single run.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use inca_core::embed::embed_texts;
use inca_core::eval::{RecallCounter, TaskSplit, TextRetriever};
use inca_core::prompt::LabelMatch;
use inca_core::{Embedder, InCASystem, PipelineConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Record, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CilOptions {
    /// Recall is reported for k = 1..=max_recall_k (capped at the class count).
    pub max_recall_k: usize,
    /// Upper bound on test instances evaluated concurrently.
    pub max_in_flight: usize,
}

impl Default for CilOptions {
    fn default() -> Self {
        Self {
            max_recall_k: 10,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub support: usize,
    pub correct: usize,
    pub no_match: usize,
    /// Wrong predictions by predicted label.
    pub confused_with: BTreeMap<String, usize>,
}

/// What produced a report; enough to rerun it under mock backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSnapshot {
    pub pipeline: PipelineConfig,
    pub split: TaskSplit,
    pub embedder: String,
    pub options: CilOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub final_accuracy: f64,
    pub recall_at_k: BTreeMap<usize, f64>,
    pub per_class: BTreeMap<String, ClassCounts>,
    pub no_match: usize,
    pub evaluated: usize,
    pub test_instances: usize,
    /// False when the run aborted and this report covers a prefix only.
    pub complete: bool,
    pub error: Option<String>,
    pub config: RunSnapshot,
    pub wall_clock_seconds: f64,
}

/// A run that failed part-way, with everything measured up to the failure.
#[derive(Debug)]
pub struct Aborted {
    pub error: Error,
    pub partial: EvalReport,
}

impl std::fmt::Display for Aborted {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run aborted after {} of {} test instances: {}",
            self.partial.evaluated, self.partial.test_instances, self.error
        )
    }
}

impl std::error::Error for Aborted {}

struct Outcome {
    label: String,
    rank: Option<usize>,
    predicted: Option<String>,
    no_match: bool,
}

struct Tally {
    recall: RecallCounter,
    correct: usize,
    no_match: usize,
    per_class: BTreeMap<String, ClassCounts>,
}

impl Tally {
    fn new(labels: impl Iterator<Item = String>) -> Self {
        Self {
            recall: RecallCounter::new(),
            correct: 0,
            no_match: 0,
            per_class: labels.map(|l| (l, ClassCounts::default())).collect(),
        }
    }

    fn add(&mut self, o: Outcome) {
        self.recall.record(o.rank);
        let counts = self.per_class.entry(o.label.clone()).or_default();
        counts.support += 1;
        if o.no_match {
            self.no_match += 1;
            counts.no_match += 1;
        }
        match o.predicted {
            Some(p) if p == o.label => {
                self.correct += 1;
                counts.correct += 1;
            }
            Some(p) => *counts.confused_with.entry(p).or_default() += 1,
            None => {}
        }
    }
}

fn pool(max_in_flight: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(max_in_flight.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))
}

fn evaluate_one(system: &InCASystem, record: &Record) -> Result<Outcome> {
    let truth = system
        .registry()
        .profile_by_name(&record.label)
        .map(|p| p.class_id);
    let (rank, prediction) = if system.config().long_context {
        (None, system.predict_long_context(&record.text)?)
    } else {
        let routing = system.route(&record.text)?;
        let rank = truth.and_then(|id| routing.rank_of(id));
        let prediction = system.predict_routed(&record.text, &routing, system.config().k)?;
        (rank, prediction)
    };
    Ok(Outcome {
        label: record.label.clone(),
        rank,
        no_match: prediction.label_match == LabelMatch::NoMatch,
        predicted: prediction.label,
    })
}

/// Learns every class of `split`, task by task, from the training records.
pub fn learn_split(system: &mut InCASystem, dataset: &Dataset, split: &TaskSplit) -> Result<()> {
    let examples = dataset.training_examples();
    for (t, task) in split.tasks.iter().enumerate() {
        for label in task {
            let texts = examples.get(label.as_str()).ok_or_else(|| {
                Error::InvalidArgument(format!("label {label:?} has no training records"))
            })?;
            system.learn_class(label, texts)?;
        }
        log::info!(
            "learned task {}/{} ({} classes so far)",
            t + 1,
            split.tasks.len(),
            system.registry().len()
        );
    }
    Ok(())
}

/// Learns `split` task by task into the empty `system`, then predicts every
/// test record once. Each instance is routed once; its rank feeds recall@k
/// and its top-k candidates feed the final prediction.
pub fn run_cil(
    system: &mut InCASystem,
    dataset: &Dataset,
    split: &TaskSplit,
    options: &CilOptions,
) -> std::result::Result<EvalReport, Box<Aborted>> {
    let started = Instant::now();
    let test: Vec<&Record> = dataset.split(Split::Test).collect();
    let snapshot = RunSnapshot {
        pipeline: system.config().clone(),
        split: split.clone(),
        embedder: system.embedder().identity().into(),
        options: options.clone(),
    };
    let labels = split.class_order().map(String::from);
    let mut tally = Tally::new(labels);

    let report = |tally: &Tally, evaluated: usize, error: Option<&Error>| {
        let k_max = options.max_recall_k.min(split.num_classes()).max(1);
        let recall_at_k = if snapshot.pipeline.long_context {
            BTreeMap::new()
        } else {
            tally.recall.curve(&(1..=k_max).collect::<Vec<_>>())
        };
        EvalReport {
            final_accuracy: if evaluated == 0 {
                0.0
            } else {
                tally.correct as f64 / evaluated as f64
            },
            recall_at_k,
            per_class: tally.per_class.clone(),
            no_match: tally.no_match,
            evaluated,
            test_instances: test.len(),
            complete: error.is_none(),
            error: error.map(|e| format!("{}: {e}", e.name())),
            config: snapshot.clone(),
            wall_clock_seconds: started.elapsed().as_secs_f64(),
        }
    };
    let abort = |tally: &Tally, evaluated: usize, error: Error| {
        let partial = report(tally, evaluated, Some(&error));
        Box::new(Aborted { error, partial })
    };

    if !system.registry().is_empty() {
        let e = Error::InvalidArgument("run_cil needs a system with no learned classes".into());
        return Err(abort(&tally, 0, e));
    }
    if test.is_empty() {
        return Err(abort(
            &tally,
            0,
            Error::InvalidArgument("dataset has no test records".into()),
        ));
    }

    if let Err(e) = learn_split(system, dataset, split) {
        return Err(abort(&tally, 0, e));
    }

    let pool = pool(options.max_in_flight).map_err(|e| abort(&tally, 0, e))?;
    let system: &InCASystem = system;
    let outcomes: Vec<Result<Outcome>> =
        pool.install(|| test.par_iter().map(|r| evaluate_one(system, r)).collect());
    let mut evaluated = 0;
    for outcome in outcomes {
        match outcome {
            Ok(o) => {
                tally.add(o);
                evaluated += 1;
            }
            Err(e) => return Err(abort(&tally, evaluated, e)),
        }
    }
    Ok(report(&tally, evaluated, None))
}

/// Instances kept per class by the text retriever.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BufferSize {
    /// One summary embedding per class.
    Summaries,
    PerClass(usize),
    Full,
}

impl BufferSize {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "full" => Some(Self::Full),
            "0" => Some(Self::Summaries),
            n => n.parse().ok().map(Self::PerClass),
        }
    }
}

impl std::fmt::Display for BufferSize {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Summaries => write!(f, "0"),
            Self::PerClass(n) => write!(f, "{n}"),
            Self::Full => write!(f, "full"),
        }
    }
}

const EMBED_CHUNK: usize = 64;

fn embed_all(embedder: &dyn Embedder, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(EMBED_CHUNK) {
        out.extend(embed_texts(embedder, chunk)?);
    }
    Ok(out)
}

/// Recall@k of the text retriever. Raw training texts (a seeded sample of
/// `buffer` per class) or class summaries are embedded directly, test texts
/// are ranked against them by cosine and scanned until k distinct classes
/// are collected. `summaries` maps label → summary and is needed for
/// [`BufferSize::Summaries`] only.
pub fn run_tr_baseline(
    dataset: &Dataset,
    split: &TaskSplit,
    buffer: BufferSize,
    k_values: &[usize],
    seed: u64,
    embedder: &dyn Embedder,
    summaries: &BTreeMap<String, String>,
) -> Result<BTreeMap<usize, f64>> {
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(Error::InvalidArgument(
            "k values must be non-empty and at least 1".into(),
        ));
    }
    if buffer == BufferSize::PerClass(0) {
        return Err(Error::InvalidArgument(
            "a buffer of 0 instances means summaries".into(),
        ));
    }
    let classes: Vec<&str> = split.class_order().collect();
    let index: BTreeMap<&str, usize> = classes.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let examples = dataset.training_examples();

    let mut stored_texts: Vec<&str> = Vec::new();
    let mut stored_class: Vec<usize> = Vec::new();
    for (c, label) in classes.iter().enumerate() {
        let chosen: Vec<&str> = match buffer {
            BufferSize::Summaries => {
                let s = summaries.get(*label).ok_or_else(|| {
                    Error::InvalidArgument(format!("no summary for class {label:?}"))
                })?;
                vec![s.as_str()]
            }
            BufferSize::Full | BufferSize::PerClass(_) => {
                let texts = examples.get(label).ok_or_else(|| {
                    Error::InvalidArgument(format!("label {label:?} has no training records"))
                })?;
                let cap = match buffer {
                    BufferSize::PerClass(n) => n.min(texts.len()),
                    _ => texts.len(),
                };
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                let mut picked = rand::seq::index::sample(&mut rng, texts.len(), cap).into_vec();
                picked.sort_unstable();
                picked.into_iter().map(|i| texts[i]).collect()
            }
        };
        stored_class.extend(std::iter::repeat_n(c, chosen.len()));
        stored_texts.extend(chosen);
    }

    let mut retriever = TextRetriever::new();
    for (class, v) in stored_class
        .into_iter()
        .zip(embed_all(embedder, &stored_texts)?)
    {
        retriever.insert(class, v);
    }

    let test: Vec<&Record> = dataset.split(Split::Test).collect();
    let queries: Vec<&str> = test.iter().map(|r| r.text.as_str()).collect();
    let vectors = embed_all(embedder, &queries)?;
    let k_max = *k_values.iter().max().unwrap();
    let mut counter = RecallCounter::new();
    for (record, v) in test.iter().zip(&vectors) {
        let ranked = retriever.distinct_classes(v, k_max);
        let rank = index
            .get(record.label.as_str())
            .and_then(|c| ranked.iter().position(|r| r == c))
            .map(|p| p + 1);
        counter.record(rank);
    }
    Ok(counter.curve(k_values))
}

/// Label → summary for every class the system has learned.
pub fn learned_summaries(system: &InCASystem) -> BTreeMap<String, String> {
    system
        .registry()
        .profiles()
        .iter()
        .map(|p| (p.name.clone(), p.summary.clone()))
        .collect()
}

/// ECL recall@k over arbitrary labelled records on a trained system.
pub fn ecl_recall(
    system: &InCASystem,
    records: &[&Record],
    k_values: &[usize],
    max_in_flight: usize,
) -> Result<BTreeMap<usize, f64>> {
    let pool = pool(max_in_flight)?;
    let ranks: Vec<Result<Option<usize>>> = pool.install(|| {
        records
            .par_iter()
            .map(|r| {
                let routing = system.route(&r.text)?;
                Ok(system
                    .registry()
                    .profile_by_name(&r.label)
                    .and_then(|p| routing.rank_of(p.class_id)))
            })
            .collect()
    });
    let mut counter = RecallCounter::new();
    for rank in ranks {
        counter.record(rank?);
    }
    Ok(counter.curve(k_values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSweep {
    pub accuracy: BTreeMap<usize, f64>,
    pub chosen_k: usize,
}

/// Accuracy on `validation` for each k; picks the smallest k with the best
/// accuracy. Each record is routed once and re-predicted per k.
pub fn sweep_k(
    system: &InCASystem,
    validation: &[&Record],
    k_values: &[usize],
    max_in_flight: usize,
) -> Result<KSweep> {
    if validation.is_empty() {
        return Err(Error::InvalidArgument("validation set is empty".into()));
    }
    if k_values.is_empty() || k_values.contains(&0) {
        return Err(Error::InvalidArgument(
            "k values must be non-empty and at least 1".into(),
        ));
    }
    let pool = pool(max_in_flight)?;
    let hits: Vec<Result<Vec<bool>>> = pool.install(|| {
        validation
            .par_iter()
            .map(|r| {
                let routing = system.route(&r.text)?;
                k_values
                    .iter()
                    .map(|&k| {
                        let p = system.predict_routed(&r.text, &routing, k)?;
                        Ok(p.label.as_deref() == Some(r.label.as_str()))
                    })
                    .collect()
            })
            .collect()
    });
    let mut correct = vec![0usize; k_values.len()];
    for row in hits {
        for (c, hit) in correct.iter_mut().zip(row?) {
            *c += usize::from(hit);
        }
    }
    let n = validation.len() as f64;
    let pairs: Vec<(usize, f64)> = k_values
        .iter()
        .zip(&correct)
        .map(|(&k, &c)| (k, c as f64 / n))
        .collect();
    let chosen_k = inca_core::eval::choose_k(&pairs).expect("k values are non-empty");
    Ok(KSweep {
        accuracy: pairs.into_iter().collect(),
        chosen_k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub stddev: f64,
    pub runs: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: 0.0,
                stddev: 0.0,
                runs: 0,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stddev = if n < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        Self {
            mean,
            stddev,
            runs: n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub k: usize,
    pub final_accuracy: Stat,
    pub recall_at_k: BTreeMap<usize, Stat>,
    pub tr_recall_at_k: BTreeMap<usize, Stat>,
}

impl Aggregate {
    pub fn from_runs(k: usize, reports: &[EvalReport], tr: &[BTreeMap<usize, f64>]) -> Self {
        let acc: Vec<f64> = reports.iter().map(|r| r.final_accuracy).collect();
        Self {
            k,
            final_accuracy: Stat::of(&acc),
            recall_at_k: aggregate_curves(reports.iter().map(|r| &r.recall_at_k)),
            tr_recall_at_k: aggregate_curves(tr.iter()),
        }
    }
}

fn aggregate_curves<'a>(
    curves: impl Iterator<Item = &'a BTreeMap<usize, f64>>,
) -> BTreeMap<usize, Stat> {
    let mut by_k: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for curve in curves {
        for (k, v) in curve {
            by_k.entry(*k).or_default().push(*v);
        }
    }
    by_k.into_iter().map(|(k, v)| (k, Stat::of(&v))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub seeds: Vec<u64>,
    pub runs: Vec<EvalReport>,
    pub tr_recall: Vec<BTreeMap<usize, f64>>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct CsvRow {
    pub k: usize,
    pub metric: String,
    pub mean: f64,
    pub stddev: f64,
    pub runs: usize,
}

impl Aggregate {
    pub fn csv_rows(&self) -> Vec<CsvRow> {
        let row = |k, metric: &str, s: &Stat| CsvRow {
            k,
            metric: metric.into(),
            mean: s.mean,
            stddev: s.stddev,
            runs: s.runs,
        };
        let mut rows = vec![row(self.k, "final_accuracy", &self.final_accuracy)];
        rows.extend(self.recall_at_k.iter().map(|(k, s)| row(*k, "recall", s)));
        rows.extend(
            self.tr_recall_at_k
                .iter()
                .map(|(k, s)| row(*k, "tr_recall", s)),
        );
        rows
    }
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("reports serialize");
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_csv(rows: &[CsvRow], path: &Path) -> Result<()> {
    let to_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::InvalidArgument(format!("{}: {other:?}", path.display())),
    };
    let mut w = csv::Writer::from_path(path).map_err(to_err)?;
    for row in rows {
        w.serialize(row).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats() {
        let s = Stat::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.stddev, 1.0);
        assert_eq!(Stat::of(&[0.5]).stddev, 0.0);
    }

    #[test]
    fn buffer_parsing() {
        assert_eq!(BufferSize::parse("0"), Some(BufferSize::Summaries));
        assert_eq!(BufferSize::parse("5"), Some(BufferSize::PerClass(5)));
        assert_eq!(BufferSize::parse("full"), Some(BufferSize::Full));
        assert_eq!(BufferSize::parse("x"), None);
    }

    #[test]
    fn csv_has_one_row_per_k_and_metric() {
        let mut recall = BTreeMap::new();
        recall.insert(1, Stat::of(&[0.5, 0.7]));
        recall.insert(2, Stat::of(&[0.9, 0.9]));
        let agg = Aggregate {
            k: 2,
            final_accuracy: Stat::of(&[0.9, 0.9]),
            recall_at_k: recall,
            tr_recall_at_k: BTreeMap::new(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        write_csv(&agg.csv_rows(), &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,metric,mean,stddev,runs");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("2,final_accuracy,0.9,"));
    }
}
