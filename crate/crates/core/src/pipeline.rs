//! Learning and prediction orchestration.
//!
//! Learning a class: tag every example, embed the pooled tags, summarise a
//! seeded sample of the examples, then fold the class into the registry.
//! Predicting: tag and embed the query, take the `k` nearest classes, and
//! let the predictor LLM choose among their summaries.

use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ecl::{ClassId, ClassProfile, Registry, ScoredClass};
use crate::embed::{embed_texts, Embedder};
use crate::error::{Error, Result};
use crate::llm::{complete, ChatClient, CompletionParams};
use crate::prompt::{
    default_few_shot, parse_label, parse_tags, render_prediction_prompt, render_summary_prompt,
    render_tag_prompt, FewShotExample, LabelMatch, PromptCandidate, PromptWording,
    DEFAULT_MAX_TAGS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub k: usize,
    pub summary_sample_size: usize,
    pub summary_max_tokens: usize,
    pub long_context: bool,
    pub skip_llm_when_k1: bool,
    pub max_tags: usize,
    /// Seeds the per-class sampler that picks summary examples.
    pub seed: u64,
    pub tag_params: CompletionParams,
    pub prediction_params: CompletionParams,
    pub wording: PromptWording,
    pub few_shot: Vec<FewShotExample>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 3,
            summary_sample_size: 20,
            summary_max_tokens: 256,
            long_context: false,
            skip_llm_when_k1: false,
            max_tags: DEFAULT_MAX_TAGS,
            seed: 0,
            tag_params: CompletionParams::TAGS,
            prediction_params: CompletionParams::PREDICTION,
            wording: PromptWording::default(),
            few_shot: default_few_shot(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.summary_sample_size == 0 {
            return Err(Error::InvalidArgument(
                "summary_sample_size must be at least 1".into(),
            ));
        }
        if self.max_tags == 0 {
            return Err(Error::InvalidArgument("max_tags must be at least 1".into()));
        }
        self.tag_params.validate()?;
        self.prediction_params.validate()?;
        self.summary_params().validate()
    }

    pub fn summary_params(&self) -> CompletionParams {
        CompletionParams {
            temperature: 0.0,
            max_tokens: self.summary_max_tokens,
        }
    }
}

/// Tags of one text and where they came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSet {
    pub tags: Vec<String>,
    /// The tagger returned nothing usable and the raw text stands in as the
    /// only tag.
    pub fallback: bool,
}

/// Full ECL ranking of one query.
#[derive(Debug, Clone, PartialEq)]
pub struct Routing {
    pub tags: TagSet,
    pub ranking: Vec<ScoredClass>,
}

impl Routing {
    /// 1-based position of `class` in the ranking.
    pub fn rank_of(&self, class: ClassId) -> Option<usize> {
        self.ranking
            .iter()
            .position(|s| s.class_id == class)
            .map(|p| p + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub predicted: Option<ClassId>,
    pub label: Option<String>,
    pub label_match: LabelMatch,
    /// Classes offered to the predictor, in prompt order.
    pub candidates: Vec<ClassId>,
    /// ECL distances of the candidates; empty in long-context mode.
    pub distances: Vec<f64>,
    pub tags: Vec<String>,
    /// Absent when the single candidate was returned without an LLM call.
    pub prompt: Option<String>,
    pub raw_output: Option<String>,
}

pub struct InCASystem {
    registry: Registry,
    embedder: Arc<dyn Embedder>,
    tagger: Arc<dyn ChatClient>,
    predictor: Arc<dyn ChatClient>,
    config: PipelineConfig,
}

impl core::fmt::Debug for InCASystem {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("InCASystem")
            .field("classes", &self.registry.len())
            .field("embedder", &self.embedder.identity())
            .field("tagger", &self.tagger.identity())
            .field("predictor", &self.predictor.identity())
            .field("config", &self.config)
            .finish()
    }
}

impl InCASystem {
    pub fn new(
        embedder: Arc<dyn Embedder>,
        tagger: Arc<dyn ChatClient>,
        predictor: Arc<dyn ChatClient>,
        config: PipelineConfig,
    ) -> Result<Self> {
        let registry = Registry::new(embedder.dimension());
        Self::from_registry(registry, embedder, tagger, predictor, config)
    }

    /// Wraps an existing registry (typically a loaded state).
    pub fn from_registry(
        mut registry: Registry,
        embedder: Arc<dyn Embedder>,
        tagger: Arc<dyn ChatClient>,
        predictor: Arc<dyn ChatClient>,
        config: PipelineConfig,
    ) -> Result<Self> {
        config.validate()?;
        if registry.dimension() != embedder.dimension() {
            return Err(Error::DimensionMismatch {
                expected: registry.dimension(),
                found: embedder.dimension(),
            });
        }
        if !registry.is_empty() {
            registry.regularized_precision()?;
        }
        Ok(Self {
            registry,
            embedder,
            tagger,
            predictor,
            config,
        })
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn embedder(&self) -> &dyn Embedder {
        &*self.embedder
    }

    pub fn set_k(&mut self, k: usize) -> Result<()> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        self.config.k = k;
        Ok(())
    }

    pub fn set_long_context(&mut self, on: bool) {
        self.config.long_context = on;
    }

    /// Tags for one text via the tag prompt; falls back to the raw text.
    pub fn generate_tags(&self, text: &str) -> Result<TagSet> {
        let prompt = render_tag_prompt(text, &self.config.few_shot);
        let output = complete(&*self.tagger, &prompt, &self.config.tag_params)?;
        let tags = parse_tags(&output, self.config.max_tags);
        if tags.is_empty() {
            log::warn!("tagger produced no tags for {text:?}; embedding the raw text instead");
            return Ok(TagSet {
                tags: alloc::vec![String::from(text.trim())],
                fallback: true,
            });
        }
        Ok(TagSet {
            tags,
            fallback: false,
        })
    }

    fn embed_tags(&self, tags: &TagSet) -> Result<Vec<Vec<f64>>> {
        let refs: Vec<&str> = tags.tags.iter().map(String::as_str).collect();
        embed_texts(&*self.embedder, &refs)
    }

    /// Learns one new class from its training examples. The examples are
    /// used for tags and the summary and are not kept afterwards.
    pub fn learn_class(&mut self, name: &str, examples: &[&str]) -> Result<&ClassProfile> {
        if examples.is_empty() {
            return Err(Error::EmptyInput("class has no training examples"));
        }
        if name.is_empty() {
            return Err(Error::InvalidArgument("class name is empty".into()));
        }
        if examples.iter().any(|e| e.trim().is_empty()) {
            return Err(Error::EmptyInput("training example is empty"));
        }
        if self.registry.contains_name(name) {
            return Err(Error::DuplicateClass(name.into()));
        }

        let mut pooled = Vec::new();
        for example in examples {
            let tags = self.generate_tags(example)?;
            pooled.extend(self.embed_tags(&tags)?);
        }

        let insertion_index = self.registry.len();
        let sample = self.summary_sample(examples, insertion_index);
        let prompt = render_summary_prompt(&self.config.wording, &sample);
        let summary = complete(&*self.predictor, &prompt, &self.config.summary_params())?;

        let class_id = self.registry.next_class_id();
        self.registry.finalize_class(class_id, name, &pooled)?;
        self.registry
            .set_summary(class_id, String::from(summary.trim()))?;
        self.registry.regularized_precision()?;
        Ok(self
            .registry
            .profile(class_id)
            .expect("class was just inserted"))
    }

    fn summary_sample<'a>(&self, examples: &[&'a str], insertion_index: usize) -> Vec<&'a str> {
        let amount = self.config.summary_sample_size.min(examples.len());
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(insertion_index as u64);
        rand::seq::index::sample(&mut rng, examples.len(), amount)
            .into_iter()
            .map(|i| examples[i])
            .collect()
    }

    /// Tags, embeds and ranks every class for `text`.
    pub fn route(&self, text: &str) -> Result<Routing> {
        if self.registry.is_empty() {
            return Err(Error::NoClasses);
        }
        let tags = self.generate_tags(text)?;
        let embeddings = self.embed_tags(&tags)?;
        let ranking = self.registry.score_instance(&embeddings)?;
        Ok(Routing { tags, ranking })
    }

    /// Prediction in the configured mode.
    pub fn classify(&self, text: &str) -> Result<Prediction> {
        if self.config.long_context {
            self.predict_long_context(text)
        } else {
            self.predict(text)
        }
    }

    pub fn predict(&self, text: &str) -> Result<Prediction> {
        let routing = self.route(text)?;
        self.predict_routed(text, &routing, self.config.k)
    }

    /// Final prediction from an existing routing using its top `k` classes.
    pub fn predict_routed(&self, text: &str, routing: &Routing, k: usize) -> Result<Prediction> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let top: Vec<ScoredClass> = routing.ranking.iter().take(k).copied().collect();
        if top.is_empty() {
            return Err(Error::NoClasses);
        }
        let candidates: Vec<ClassId> = top.iter().map(|s| s.class_id).collect();
        let distances = top.iter().map(|s| s.distance).collect();
        let tags = routing.tags.tags.clone();

        if self.config.skip_llm_when_k1 && k == 1 {
            let id = candidates[0];
            return Ok(Prediction {
                predicted: Some(id),
                label: Some(self.name_of(id)?.into()),
                label_match: LabelMatch::Exact(id),
                candidates,
                distances,
                tags,
                prompt: None,
                raw_output: None,
            });
        }
        self.ask_predictor(text, candidates, distances, tags)
    }

    /// Prediction with every learned class in the prompt and no routing.
    pub fn predict_long_context(&self, text: &str) -> Result<Prediction> {
        if self.registry.is_empty() {
            return Err(Error::NoClasses);
        }
        let candidates = self
            .registry
            .profiles()
            .iter()
            .map(|p| p.class_id)
            .collect();
        self.ask_predictor(text, candidates, Vec::new(), Vec::new())
    }

    fn name_of(&self, id: ClassId) -> Result<&str> {
        self.registry
            .profile(id)
            .map(|p| p.name.as_str())
            .ok_or(Error::UnknownClass(id))
    }

    fn ask_predictor(
        &self,
        text: &str,
        candidates: Vec<ClassId>,
        distances: Vec<f64>,
        tags: Vec<String>,
    ) -> Result<Prediction> {
        let mut prompt_candidates = Vec::with_capacity(candidates.len());
        let mut named = Vec::with_capacity(candidates.len());
        for id in &candidates {
            let p = self.registry.profile(*id).ok_or(Error::UnknownClass(*id))?;
            prompt_candidates.push(PromptCandidate {
                name: &p.name,
                summary: &p.summary,
            });
            named.push((*id, p.name.as_str()));
        }
        let prompt = render_prediction_prompt(&self.config.wording, text, &prompt_candidates);
        let raw = complete(&*self.predictor, &prompt, &self.config.prediction_params)?;
        let label_match = parse_label(&raw, &named);
        let predicted = label_match.class_id();
        let label = match predicted {
            Some(id) => Some(String::from(self.name_of(id)?)),
            None => None,
        };
        Ok(Prediction {
            predicted,
            label,
            label_match,
            candidates,
            distances,
            tags,
            prompt: Some(prompt),
            raw_output: Some(raw),
        })
    }
}
