//! JSON Lines datasets.
//!
//! One record per line:
//!
//! ```text
//! {"text": "get my paycheck to direct deposit", "label": "direct_deposit", "split": "test"}
//! ```
//!
//! `split` is optional and is one of `train`, `validation`, `test`
//! (default `train`). Blank lines are ignored.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Validation,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Record {
    pub text: String,
    pub label: String,
    #[serde(default)]
    pub split: Split,
}

impl Record {
    pub fn new(text: impl Into<String>, label: impl Into<String>, split: Split) -> Self {
        Self {
            text: text.into(),
            label: label.into(),
            split,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    records: Vec<Record>,
}

impl Dataset {
    /// Checks the dataset invariants: no empty text or label, and every
    /// validation or test label also occurs in training.
    pub fn from_records(records: Vec<Record>) -> Result<Self> {
        let dataset = Self { records };
        if let Some((i, why)) = dataset.first_violation() {
            let r = &dataset.records[i];
            return Err(Error::InvalidArgument(format!(
                "record {} ({:?}, label {:?}) {why}",
                i + 1,
                r.text,
                r.label
            )));
        }
        Ok(dataset)
    }

    fn first_violation(&self) -> Option<(usize, &'static str)> {
        let train: std::collections::HashSet<&str> = self
            .records
            .iter()
            .filter(|r| r.split == Split::Train)
            .map(|r| r.label.as_str())
            .collect();
        self.records.iter().enumerate().find_map(|(i, r)| {
            if r.text.trim().is_empty() {
                Some((i, "has empty text"))
            } else if r.label.trim().is_empty() {
                Some((i, "has an empty label"))
            } else if r.split != Split::Train && !train.contains(r.label.as_str()) {
                Some((i, "has a label with no training records"))
            } else {
                None
            }
        })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn count(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Distinct training labels, sorted.
    pub fn labels(&self) -> Vec<String> {
        let mut labels: Vec<String> = self.split(Split::Train).map(|r| r.label.clone()).collect();
        labels.sort();
        labels.dedup();
        labels
    }

    /// Training texts per label, in file order.
    pub fn training_examples(&self) -> BTreeMap<&str, Vec<&str>> {
        let mut out: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for r in self.split(Split::Train) {
            out.entry(&r.label).or_default().push(&r.text);
        }
        out
    }

    /// When there are no test records, moves a seeded `fraction` of each
    /// label's training records (at least one, never all) to the test split.
    pub fn with_holdout(mut self, fraction: f64, seed: u64) -> Result<Self> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::InvalidArgument(format!(
                "holdout fraction {fraction} is not in [0, 1)"
            )));
        }
        if self.count(Split::Test) > 0 || fraction == 0.0 {
            return Ok(self);
        }
        let mut by_label: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for (i, r) in self.records.iter().enumerate() {
            if r.split == Split::Train {
                by_label.entry(r.label.clone()).or_default().push(i);
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for indices in by_label.values() {
            if indices.len() < 2 {
                continue;
            }
            let take =
                ((indices.len() as f64 * fraction).round() as usize).clamp(1, indices.len() - 1);
            for j in sample(&mut rng, indices.len(), take) {
                self.records[indices[j]].split = Split::Test;
            }
        }
        Ok(self)
    }
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut lines = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line).map_err(|e| Error::ParseFailure {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?;
        records.push(record);
        lines.push(n + 1);
    }
    let dataset = Dataset { records };
    if let Some((i, message)) = dataset.first_violation() {
        return Err(Error::ParseFailure {
            path: path.to_path_buf(),
            line: lines[i],
            message: message.into(),
        });
    }
    Ok(dataset)
}
