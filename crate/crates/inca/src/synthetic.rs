//! Synthetic worlds with known geometry for testing and calibration.
//!
//! Every text, tag and summary produced here has a fixed vector in a
//! [`TableEmbedder`], and the mock LLM knows every text's label and tags, so
//! the whole pipeline runs offline and its ideal behaviour can be computed
//! by brute force.
//!
//! In a generated world, class `c` has mean `μ_c`. Each training or test
//! text has `tags_per_text` tags, each embedded at `μ_c + noise`, and the
//! text itself is embedded at `μ_c + noise` as well. The mock summary of
//! class `c` is embedded exactly at `μ_c`. Noise is isotropic Gaussian with
//! per-coordinate deviation `noise_sigma`, so the within-class spread is
//! `noise_sigma · √h`.

use std::collections::BTreeMap;
use std::sync::Arc;

use inca_core::llm::MockLlm;
use inca_core::{ChatClient, Embedder, InCASystem, PipelineConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{Dataset, Record, Split};
use crate::error::{Error, Result};
use inca_core::embed::TableEmbedder;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub classes: usize,
    pub dimension: usize,
    pub train_per_class: usize,
    pub validation_per_class: usize,
    pub test_per_class: usize,
    pub tags_per_text: usize,
    pub noise_sigma: f64,
    /// Per-coordinate deviation of the class means around the origin.
    pub mean_scale: f64,
    /// Every pair of means is at least this many spreads apart.
    pub min_separation: f64,
    pub seed: u64,
}

impl SyntheticConfig {
    /// 50 classes in 16 dimensions, means at least ten spreads apart.
    pub fn separable(seed: u64) -> Self {
        Self {
            classes: 50,
            dimension: 16,
            train_per_class: 20,
            validation_per_class: 0,
            test_per_class: 20,
            tags_per_text: 4,
            noise_sigma: 0.05,
            mean_scale: 1.0,
            min_separation: 10.0,
            seed,
        }
    }

    pub fn spread(&self) -> f64 {
        self.noise_sigma * (self.dimension as f64).sqrt()
    }
}

pub fn class_label(c: usize) -> String {
    format!("class_{c:03}")
}

/// Everything needed to run the pipeline over a synthetic world.
#[derive(Clone)]
pub struct SyntheticWorld {
    pub config: SyntheticConfig,
    pub labels: Vec<String>,
    pub means: Vec<Vec<f64>>,
    pub dataset: Dataset,
    pub embedder: TableEmbedder,
    /// Text → tags returned by the mock tagger.
    pub tag_table: BTreeMap<String, Vec<String>>,
    /// Text → true label, known to the mock summarizer and predictor.
    pub truth: BTreeMap<String, String>,
}

impl SyntheticWorld {
    pub fn generate(config: SyntheticConfig) -> Result<Self> {
        if config.classes == 0
            || config.dimension == 0
            || config.train_per_class == 0
            || config.tags_per_text == 0
        {
            return Err(Error::InvalidArgument(
                "synthetic worlds need classes, dimensions, training texts and tags".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let means = sample_means(&config, &mut rng)?;
        let noise = Normal::new(0.0, config.noise_sigma)
            .map_err(|e| Error::InvalidArgument(format!("noise_sigma: {e}")))?;
        let labels: Vec<String> = (0..config.classes).map(class_label).collect();
        let mut embedder = TableEmbedder::new(
            format!("synthetic/seed={}/h={}", config.seed, config.dimension),
            config.dimension,
        );
        let mut tag_table = BTreeMap::new();
        let mut truth = BTreeMap::new();
        let mut records = Vec::new();
        let jitter = |rng: &mut ChaCha8Rng, mean: &[f64]| -> Vec<f64> {
            mean.iter().map(|m| m + noise.sample(rng)).collect()
        };

        for (c, (label, mean)) in labels.iter().zip(&means).enumerate() {
            embedder.insert(MockLlm::summary_for_label(label), mean.clone())?;
            let splits = [
                (Split::Train, "train", config.train_per_class),
                (Split::Validation, "validation", config.validation_per_class),
                (Split::Test, "test", config.test_per_class),
            ];
            for (split, name, count) in splits {
                for i in 0..count {
                    let text = format!("{label} {name} {i}");
                    let tags: Vec<String> = (0..config.tags_per_text)
                        .map(|j| format!("c{c} {name} {i} tag {j}"))
                        .collect();
                    for tag in &tags {
                        embedder.insert(tag.clone(), jitter(&mut rng, mean))?;
                    }
                    embedder.insert(text.clone(), jitter(&mut rng, mean))?;
                    tag_table.insert(text.clone(), tags);
                    truth.insert(text.clone(), label.clone());
                    records.push(Record::new(text, label.clone(), split));
                }
            }
        }
        Ok(Self {
            config,
            labels,
            means,
            dataset: Dataset::from_records(records)?,
            embedder,
            tag_table,
            truth,
        })
    }

    /// Oracle tagger, summarizer and predictor for this world.
    pub fn llm(&self) -> MockLlm {
        MockLlm::new()
            .with_labels(self.truth.clone())
            .with_tag_table(self.tag_table.clone())
    }

    /// An empty system wired to this world's embedder and oracle LLM.
    pub fn system(&self, config: PipelineConfig) -> Result<InCASystem> {
        let llm: Arc<dyn ChatClient> = Arc::new(self.llm());
        let embedder: Arc<dyn Embedder> = Arc::new(self.embedder.clone());
        Ok(InCASystem::new(embedder, llm.clone(), llm, config)?)
    }

    pub fn min_mean_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.means.iter().enumerate() {
            for b in &self.means[i + 1..] {
                best = best.min(euclidean(a, b));
            }
        }
        best
    }
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn sample_means(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<f64>>> {
    let dist = Normal::new(0.0, config.mean_scale)
        .map_err(|e| Error::InvalidArgument(format!("mean_scale: {e}")))?;
    let min = config.min_separation * config.spread();
    let mut means: Vec<Vec<f64>> = Vec::with_capacity(config.classes);
    let mut rejected = 0usize;
    while means.len() < config.classes {
        let candidate: Vec<f64> = (0..config.dimension).map(|_| dist.sample(rng)).collect();
        if means.iter().all(|m| euclidean(m, &candidate) >= min) {
            means.push(candidate);
        } else {
            rejected += 1;
            if rejected > 100_000 {
                return Err(Error::InvalidArgument(format!(
                    "cannot place {} means {min} apart with scale {}",
                    config.classes, config.mean_scale
                )));
            }
        }
    }
    Ok(means)
}

/// Hand-built k-selection fixture: four classes on the corners of a square
/// in two dimensions and twenty validation queries for the class at the
/// origin. Training tags sit at `μ ± e_1` and `μ ± e_2`, so the shared
/// covariance is exactly `0.5·I` and ranking is Euclidean.
///
/// Sixteen queries sit next to their own class, three are closer to a
/// neighbour (own class second) and one sits on the far corner (own class
/// fourth), giving recall@1 = 0.8, recall@2 = 0.95 and recall@3 = 0.95.
pub fn k_sweep_fixture() -> Result<(SyntheticWorld, Vec<Record>)> {
    let corners = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0]];
    let labels: Vec<String> = (0..4).map(class_label).collect();
    let mut embedder = TableEmbedder::new("k-sweep-fixture", 2);
    let mut tag_table = BTreeMap::new();
    let mut truth = BTreeMap::new();
    let mut records = Vec::new();
    let offsets = [[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]];
    for (c, (label, mu)) in labels.iter().zip(&corners).enumerate() {
        embedder.insert(MockLlm::summary_for_label(label), mu.to_vec())?;
        for (i, off) in offsets.iter().enumerate() {
            let text = format!("{label} train {i}");
            let tag = format!("c{c} train tag {i}");
            embedder.insert(tag.clone(), vec![mu[0] + off[0], mu[1] + off[1]])?;
            embedder.insert(text.clone(), vec![mu[0] + off[0], mu[1] + off[1]])?;
            tag_table.insert(text.clone(), vec![tag]);
            truth.insert(text.clone(), label.clone());
            records.push(Record::new(text, label.clone(), Split::Train));
        }
    }
    let mut validation = Vec::new();
    let placements = std::iter::repeat_n([1.0, 1.0], 16)
        .chain(std::iter::repeat_n([6.0, 1.0], 3))
        .chain(std::iter::once([10.0, 10.0]));
    for (i, point) in placements.enumerate() {
        let text = format!("{} validation {i}", labels[0]);
        let tag = format!("validation tag {i}");
        embedder.insert(tag.clone(), point.to_vec())?;
        embedder.insert(text.clone(), point.to_vec())?;
        tag_table.insert(text.clone(), vec![tag]);
        truth.insert(text.clone(), labels[0].clone());
        let record = Record::new(text, labels[0].clone(), Split::Validation);
        records.push(record.clone());
        validation.push(record);
    }
    let world = SyntheticWorld {
        config: SyntheticConfig {
            classes: 4,
            dimension: 2,
            train_per_class: 4,
            validation_per_class: 0,
            test_per_class: 0,
            tags_per_text: 1,
            noise_sigma: 0.0,
            mean_scale: 10.0,
            min_separation: 0.0,
            seed: 0,
        },
        labels,
        means: corners.iter().map(|c| c.to_vec()).collect(),
        dataset: Dataset::from_records(records)?,
        embedder,
        tag_table,
        truth,
    };
    Ok((world, validation))
}
