//! Evaluation primitives that do not touch IO: task splits, recall@k
//! accumulation, the text-retriever ranking and k selection.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cosine;

/// Ordered partition of the label set into disjoint tasks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSplit {
    pub seed: u64,
    pub tasks: Vec<Vec<String>>,
}

impl TaskSplit {
    pub fn num_classes(&self) -> usize {
        self.tasks.iter().map(Vec::len).sum()
    }

    /// All labels in learning order.
    pub fn class_order(&self) -> impl Iterator<Item = &str> {
        self.tasks.iter().flatten().map(String::as_str)
    }
}

/// Shuffles the distinct labels with `seed` and cuts them into `tasks`
/// contiguous chunks whose sizes differ by at most one. Labels inside a
/// task are sorted so learning order depends only on the split.
pub fn split_tasks<S: AsRef<str>>(labels: &[S], tasks: usize, seed: u64) -> Result<TaskSplit> {
    let mut distinct: Vec<String> = labels.iter().map(|l| String::from(l.as_ref())).collect();
    distinct.sort();
    distinct.dedup();
    if tasks == 0 || tasks > distinct.len() {
        return Err(Error::InvalidArgument(alloc::format!(
            "cannot split {} classes into {tasks} tasks",
            distinct.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    distinct.shuffle(&mut rng);

    let base = distinct.len() / tasks;
    let extra = distinct.len() % tasks;
    let mut out = Vec::with_capacity(tasks);
    let mut rest = distinct.as_slice();
    for t in 0..tasks {
        let size = base + usize::from(t < extra);
        let (chunk, tail) = rest.split_at(size);
        let mut chunk = chunk.to_vec();
        chunk.sort();
        out.push(chunk);
        rest = tail;
    }
    Ok(TaskSplit { seed, tasks: out })
}

/// Accumulates the rank of the true class per query and reports recall@k.
#[derive(Debug, Clone, Default)]
pub struct RecallCounter {
    /// hits[r - 1] = queries whose true class sat at rank r.
    hits: Vec<usize>,
    total: usize,
}

impl RecallCounter {
    pub fn new() -> Self {
        Self::default()
    }

    /// `rank` is 1-based; `None` means the true class was not ranked at all.
    pub fn record(&mut self, rank: Option<usize>) {
        self.total += 1;
        if let Some(r) = rank.filter(|r| *r >= 1) {
            if self.hits.len() < r {
                self.hits.resize(r, 0);
            }
            self.hits[r - 1] += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn hits_at(&self, k: usize) -> usize {
        self.hits.iter().take(k).sum()
    }

    pub fn recall_at(&self, k: usize) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.hits_at(k) as f64 / self.total as f64
        }
    }

    pub fn curve(&self, k_values: &[usize]) -> BTreeMap<usize, f64> {
        k_values.iter().map(|&k| (k, self.recall_at(k))).collect()
    }
}

/// Flat store of labelled vectors ranked by cosine similarity.
#[derive(Debug, Clone, Default)]
pub struct TextRetriever {
    entries: Vec<(usize, Vec<f64>)>,
}

impl TextRetriever {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, class: usize, vector: Vec<f64>) {
        self.entries.push((class, vector));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Scans stored vectors from most to least similar and returns the first
    /// `limit` distinct classes met. Equal similarities keep insertion order.
    pub fn distinct_classes(&self, query: &[f64], limit: usize) -> Vec<usize> {
        let mut scored: Vec<(f64, usize, usize)> = self
            .entries
            .iter()
            .enumerate()
            .map(|(i, (class, v))| (cosine(query, v), i, *class))
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let mut out: Vec<usize> = Vec::new();
        for (_, _, class) in scored {
            if out.len() == limit {
                break;
            }
            if !out.contains(&class) {
                out.push(class);
            }
        }
        out
    }
}

/// Smallest k with the highest accuracy.
pub fn choose_k(accuracy_by_k: &[(usize, f64)]) -> Option<usize> {
    let mut sorted = accuracy_by_k.to_vec();
    sorted.sort_by_key(|(k, _)| *k);
    sorted
        .into_iter()
        .fold(None, |best: Option<(usize, f64)>, (k, acc)| match best {
            Some((_, b)) if b >= acc => best,
            _ => Some((k, acc)),
        })
        .map(|(k, _)| k)
}
