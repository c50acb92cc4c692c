//! Chat-completion interface and the deterministic mock used by tests and
//! `--mock` runs.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::{self, PromptKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_tokens: usize,
}

impl CompletionParams {
    pub const TAGS: CompletionParams = CompletionParams {
        temperature: 0.0,
        max_tokens: 64,
    };
    pub const SUMMARY: CompletionParams = CompletionParams {
        temperature: 0.0,
        max_tokens: 256,
    };
    pub const PREDICTION: CompletionParams = CompletionParams {
        temperature: 0.0,
        max_tokens: 16,
    };

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(Error::InvalidArgument(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == 0 {
            return Err(Error::InvalidArgument(
                "max_tokens must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Whitespace-delimited word count. Used as the token estimate when a
/// client does not supply its own tokenizer.
pub fn estimate_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

pub trait ChatClient: Send + Sync {
    fn identity(&self) -> &str;

    /// Prompt budget in tokens, if the backend declares one.
    fn context_window(&self) -> Option<usize> {
        None
    }

    fn count_tokens(&self, text: &str) -> usize {
        estimate_tokens(text)
    }

    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String>;
}

impl<C: ChatClient + ?Sized> ChatClient for alloc::sync::Arc<C> {
    fn identity(&self) -> &str {
        (**self).identity()
    }
    fn context_window(&self) -> Option<usize> {
        (**self).context_window()
    }
    fn count_tokens(&self, text: &str) -> usize {
        (**self).count_tokens(text)
    }
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String> {
        (**self).complete(prompt, params)
    }
}

/// Validates the request, enforces the client's context window and strips
/// control characters (other than newline) from the response.
pub fn complete<C: ChatClient + ?Sized>(
    client: &C,
    prompt: &str,
    params: &CompletionParams,
) -> Result<String> {
    if prompt.is_empty() {
        return Err(Error::EmptyInput("prompt is empty"));
    }
    params.validate()?;
    if let Some(window) = client.context_window() {
        let prompt_tokens = client.count_tokens(prompt);
        if prompt_tokens > window {
            return Err(Error::TokenLimitExceeded {
                prompt_tokens,
                context_window: window,
            });
        }
    }
    let raw = client.complete(prompt, params)?;
    Ok(strip_control(&raw))
}

fn strip_control(text: &str) -> String {
    text.replace("\r\n", "\n")
        .chars()
        .filter_map(|c| match c {
            '\n' => Some('\n'),
            '\t' | '\r' => Some(' '),
            c if c.is_control() => None,
            c => Some(c),
        })
        .collect()
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "at", "be", "can", "do", "for", "from", "have", "how", "i", "in",
    "is", "it", "me", "my", "of", "on", "or", "the", "this", "to", "what", "with", "you",
];

/// Tags the mock tagger emits for `text`: lowercase words that are not
/// stopwords, followed by every adjacent pair of such words, deduplicated
/// and capped at 32.
pub fn oracle_tags(text: &str) -> Vec<String> {
    let words: Vec<String> = text
        .split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(str::to_lowercase)
        .filter(|w| !w.is_empty() && !STOPWORDS.contains(&w.as_str()))
        .collect();
    let mut tags: Vec<String> = Vec::new();
    let bigrams = words.windows(2).map(|w| format!("{} {}", w[0], w[1]));
    for tag in words.iter().cloned().chain(bigrams) {
        if tags.len() == prompt::DEFAULT_MAX_TAGS {
            break;
        }
        if !tags.contains(&tag) {
            tags.push(tag);
        }
    }
    tags
}

/// Deterministic stand-in for an instruction-tuned LLM.
///
/// It recognises which of the three prompts it was given:
/// - tag prompts get the tags from the tag table, or [`oracle_tags`];
/// - summary prompts get [`MockLlm::summary_for_label`] of the majority
///   known label among the listed queries;
/// - prediction prompts get the query's true label when it is among the
///   listed categories, otherwise the first category.
///
/// Output is truncated to `max_tokens` words.
#[derive(Debug, Default)]
pub struct MockLlm {
    identity: String,
    labels: BTreeMap<String, String>,
    tag_table: BTreeMap<String, Vec<String>>,
    context_window: Option<usize>,
    calls: [AtomicUsize; 4],
}

impl MockLlm {
    pub fn new() -> Self {
        Self {
            identity: "mock-oracle".into(),
            ..Default::default()
        }
    }

    pub fn with_labels<I, T, L>(mut self, labels: I) -> Self
    where
        I: IntoIterator<Item = (T, L)>,
        T: Into<String>,
        L: Into<String>,
    {
        self.labels
            .extend(labels.into_iter().map(|(t, l)| (t.into(), l.into())));
        self
    }

    pub fn with_tag_table<I, T>(mut self, table: I) -> Self
    where
        I: IntoIterator<Item = (T, Vec<String>)>,
        T: Into<String>,
    {
        self.tag_table
            .extend(table.into_iter().map(|(t, tags)| (t.into(), tags)));
        self
    }

    pub fn with_context_window(mut self, tokens: usize) -> Self {
        self.context_window = Some(tokens);
        self
    }

    pub fn summary_for_label(label: &str) -> String {
        format!("Queries about {label}.")
    }

    pub fn calls(&self) -> usize {
        self.calls.iter().map(|c| c.load(Ordering::Relaxed)).sum()
    }

    pub fn calls_of(&self, kind: PromptKind) -> usize {
        self.calls[Self::slot(Some(kind))].load(Ordering::Relaxed)
    }

    fn slot(kind: Option<PromptKind>) -> usize {
        match kind {
            Some(PromptKind::TagGeneration) => 0,
            Some(PromptKind::Summarization) => 1,
            Some(PromptKind::Prediction) => 2,
            None => 3,
        }
    }

    fn summarize(&self, prompt: &str) -> String {
        let queries = prompt::summary_prompt_queries(prompt);
        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        for q in &queries {
            if let Some(label) = self.labels.get(*q) {
                *votes.entry(label.as_str()).or_default() += 1;
            }
        }
        // BTreeMap iteration makes ties resolve to the smallest label.
        let winner = votes
            .iter()
            .fold(None::<(&str, usize)>, |best, (l, n)| match best {
                Some((_, bn)) if bn >= *n => best,
                _ => Some((*l, *n)),
            });
        match winner {
            Some((label, _)) => Self::summary_for_label(label),
            None => format!(
                "Queries such as: {}",
                queries.first().copied().unwrap_or("(none)")
            ),
        }
    }

    fn classify(&self, prompt: &str) -> String {
        let categories = prompt::prediction_prompt_categories(prompt);
        let truth = prompt::prompt_query(prompt).and_then(|q| self.labels.get(q));
        match truth {
            Some(t) if categories.contains(&t.as_str()) => t.clone(),
            _ => categories.first().copied().unwrap_or_default().into(),
        }
    }
}

fn truncate_words(text: String, max_words: usize) -> String {
    if estimate_tokens(&text) <= max_words {
        return text;
    }
    text.split_whitespace()
        .take(max_words)
        .collect::<Vec<_>>()
        .join(" ")
}

impl ChatClient for MockLlm {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn context_window(&self) -> Option<usize> {
        self.context_window
    }

    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<String> {
        let kind = PromptKind::detect(prompt);
        self.calls[Self::slot(kind)].fetch_add(1, Ordering::Relaxed);
        let out = match kind {
            Some(PromptKind::TagGeneration) => {
                let query = prompt::prompt_query(prompt).unwrap_or_default();
                match self.tag_table.get(query) {
                    Some(tags) => prompt::join_tags(tags),
                    None => prompt::join_tags(&oracle_tags(query)),
                }
            }
            Some(PromptKind::Summarization) => self.summarize(prompt),
            Some(PromptKind::Prediction) => self.classify(prompt),
            None => String::new(),
        };
        Ok(truncate_words(out, params.max_tokens))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{
        default_few_shot, render_prediction_prompt, render_summary_prompt, render_tag_prompt,
        PromptCandidate, PromptWording,
    };
    use alloc::vec;

    fn prediction_prompt(query: &str, names: &[&str]) -> String {
        let cands: Vec<PromptCandidate<'_>> = names
            .iter()
            .map(|n| PromptCandidate {
                name: n,
                summary: "s",
            })
            .collect();
        render_prediction_prompt(&PromptWording::default(), query, &cands)
    }

    #[test]
    fn oracle_classifier_returns_truth_when_listed() {
        let llm = MockLlm::new().with_labels([("get my paycheck", "direct_deposit")]);
        let p = prediction_prompt("get my paycheck", &["income", "direct_deposit"]);
        assert_eq!(
            complete(&llm, &p, &CompletionParams::PREDICTION).unwrap(),
            "direct_deposit"
        );
    }

    #[test]
    fn oracle_classifier_falls_back_to_first_candidate() {
        let llm = MockLlm::new().with_labels([("get my paycheck", "direct_deposit")]);
        let p = prediction_prompt("get my paycheck", &["income", "payday"]);
        assert_eq!(
            complete(&llm, &p, &CompletionParams::PREDICTION).unwrap(),
            "income"
        );
        let p = prediction_prompt("unknown query", &["payday"]);
        assert_eq!(
            complete(&llm, &p, &CompletionParams::PREDICTION).unwrap(),
            "payday"
        );
    }

    #[test]
    fn oracle_tagger_output() {
        let llm = MockLlm::new();
        let p = render_tag_prompt("Transfer funds to my savings account", &default_few_shot());
        let out = complete(&llm, &p, &CompletionParams::TAGS).unwrap();
        assert_eq!(
            out,
            "transfer, funds, savings, account, transfer funds, funds savings, savings account"
        );
        assert_eq!(llm.calls_of(PromptKind::TagGeneration), 1);
    }

    #[test]
    fn tag_table_overrides() {
        let llm = MockLlm::new().with_tag_table([("q", vec!["x".into(), "y".into()])]);
        let p = render_tag_prompt("q", &[]);
        assert_eq!(complete(&llm, &p, &CompletionParams::TAGS).unwrap(), "x, y");
    }

    #[test]
    fn summaries_follow_majority_label() {
        let llm = MockLlm::new().with_labels([("a", "l1"), ("b", "l2"), ("c", "l2")]);
        let p = render_summary_prompt(&PromptWording::default(), &["a", "b", "c"]);
        assert_eq!(
            complete(&llm, &p, &CompletionParams::SUMMARY).unwrap(),
            "Queries about l2."
        );
        let p = render_summary_prompt(&PromptWording::default(), &["zzz"]);
        assert_eq!(
            complete(&llm, &p, &CompletionParams::SUMMARY).unwrap(),
            "Queries such as: zzz"
        );
    }

    #[test]
    fn context_window_is_enforced() {
        let llm = MockLlm::new().with_context_window(5);
        let err = complete(&llm, "one two three four five six", &CompletionParams::TAGS);
        assert_eq!(
            err,
            Err(Error::TokenLimitExceeded {
                prompt_tokens: 6,
                context_window: 5
            })
        );
        assert_eq!(llm.calls(), 0);
    }

    #[test]
    fn params_are_validated() {
        let llm = MockLlm::new();
        let bad = CompletionParams {
            temperature: 2.5,
            max_tokens: 4,
        };
        assert!(matches!(
            complete(&llm, "x", &bad),
            Err(Error::InvalidArgument(_))
        ));
        let bad = CompletionParams {
            temperature: 0.0,
            max_tokens: 0,
        };
        assert!(matches!(
            complete(&llm, "x", &bad),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            complete(&llm, "", &CompletionParams::TAGS),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn control_characters_are_removed() {
        assert_eq!(strip_control("a\u{7}b\r\nc\td"), "ab\nc d");
    }

    #[test]
    fn output_respects_max_tokens() {
        let llm = MockLlm::new();
        let p = render_tag_prompt("alpha beta gamma delta epsilon", &[]);
        let out = complete(
            &llm,
            &p,
            &CompletionParams {
                temperature: 0.0,
                max_tokens: 3,
            },
        )
        .unwrap();
        assert_eq!(estimate_tokens(&out), 3);
    }

    #[test]
    fn oracle_tags_skip_stopwords() {
        assert!(oracle_tags("how do i").is_empty());
        assert_eq!(
            oracle_tags("Delta DELTA delta"),
            vec!["delta", "delta delta"]
        );
    }
}
