//! The three prompts (summarisation, tag generation, prediction) and the
//! parsers for their outputs.
//!
//! Rendering is pure: the same inputs always produce the same bytes.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::ecl::ClassId;

pub const DEFAULT_MAX_TAGS: usize = 32;

/// Which prompt a piece of text was rendered from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    TagGeneration,
    Summarization,
    Prediction,
}

const SUMMARY_OPENING: &str = "Review the following user queries and provide a summary of the ";
const TAG_OPENING: &str = "Generate descriptive tags for the following queries.";
const PREDICTION_OPENING: &str = "Based on the given query, classify ";

impl PromptKind {
    /// Recognises a prompt rendered by this module from its opening words.
    pub fn detect(prompt: &str) -> Option<PromptKind> {
        if prompt.starts_with(TAG_OPENING) {
            Some(PromptKind::TagGeneration)
        } else if prompt.starts_with(SUMMARY_OPENING) {
            Some(PromptKind::Summarization)
        } else if prompt.starts_with(PREDICTION_OPENING) {
            Some(PromptKind::Prediction)
        } else {
            None
        }
    }
}

/// Dataset-dependent words in the prompts. The defaults are the intent
/// classification wording; topic classification swaps in "topic".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptWording {
    /// Noun after "provide a summary of the".
    pub summary_subject: String,
    /// Phrase after "classify" in the prediction prompt.
    pub classification_target: String,
}

impl Default for PromptWording {
    fn default() -> Self {
        Self::intent()
    }
}

impl PromptWording {
    pub fn intent() -> Self {
        Self {
            summary_subject: "intent".into(),
            classification_target: "the user's intent".into(),
        }
    }

    pub fn topic() -> Self {
        Self {
            summary_subject: "topic".into(),
            classification_target: "the text's topic".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub query: String,
    pub tags: String,
}

impl FewShotExample {
    pub fn new(query: impl Into<String>, tags: impl Into<String>) -> Self {
        Self {
            query: query.into(),
            tags: tags.into(),
        }
    }
}

/// The three intent-classification examples shipped with the tag prompt.
pub fn default_few_shot() -> Vec<FewShotExample> {
    alloc::vec![
        FewShotExample::new(
            "Should I wear a coat today?",
            "weather advice, inquiry, clothing, temperature, coat, wear",
        ),
        FewShotExample::new(
            "Book a table for two at a popular Italian restaurant downtown?",
            "dining reservation, Italian cuisine, booking, restaurant, table, request",
        ),
        FewShotExample::new(
            "How can I send money to a foreign bank account using the app?",
            "international money transfer, send money, app, foreign bank, digital transfer",
        ),
    ]
}

pub fn render_summary_prompt(wording: &PromptWording, example_texts: &[&str]) -> String {
    let mut out = String::new();
    out.push_str(SUMMARY_OPENING);
    out.push_str(&wording.summary_subject);
    out.push_str(
        ". Keep the summary generic and avoid referencing any named entities that appear in the queries.\n\nQueries:\n",
    );
    for text in example_texts {
        let _ = writeln!(out, "- {text}");
    }
    out.push_str("Summary:");
    out
}

pub fn render_tag_prompt(query: &str, few_shot: &[FewShotExample]) -> String {
    let mut out = String::new();
    out.push_str(TAG_OPENING);
    out.push_str(
        " Focus on user intention, relevant entities, and keywords. Extend these tags to related, unmentioned terms that are contextually relevant.\n\
         \n\
         Guidelines:\n\
         Topic: Identify user intention or subject area the query pertains to.\n\
         Entity Recognition: Focus on recognizable entities common in similar queries.\n\
         Keywords: Extract specific terms or verbs that define the query's intent.\n\
         Related Tags: Include tags that are related to user intention, even if not directly mentioned, to provide broader contextual understanding.\n\
         \n",
    );
    if !few_shot.is_empty() {
        out.push_str("Examples:\n");
        for ex in few_shot {
            let _ = write!(out, "Query: \"{}\"\nTags: {}\n\n", ex.query, ex.tags);
        }
    }
    let _ = write!(out, "Query: {query}\nTags:");
    out
}

/// Candidate as it appears in the prediction prompt.
#[derive(Debug, Clone, Copy)]
pub struct PromptCandidate<'a> {
    pub name: &'a str,
    pub summary: &'a str,
}

pub fn render_prediction_prompt(
    wording: &PromptWording,
    query: &str,
    candidates: &[PromptCandidate<'_>],
) -> String {
    let mut out = String::new();
    out.push_str(PREDICTION_OPENING);
    out.push_str(&wording.classification_target);
    out.push_str(" into one of the following categories: ");
    for (i, c) in candidates.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(c.name);
    }
    out.push_str("\n\n");
    for c in candidates {
        let _ = write!(out, "{}:\n{}\n\n", c.name, c.summary);
    }
    let _ = write!(out, "Query: {query}\nClass:");
    out
}

/// Category names listed on the first line of a prediction prompt.
pub fn prediction_prompt_categories(prompt: &str) -> Vec<&str> {
    let first = prompt.lines().next().unwrap_or("");
    match first.split_once("following categories: ") {
        Some((_, list)) => list.split(", ").collect(),
        None => Vec::new(),
    }
}

/// Query line of a tag or prediction prompt (the last `Query: ` line).
pub fn prompt_query(prompt: &str) -> Option<&str> {
    prompt.lines().rev().find_map(|l| l.strip_prefix("Query: "))
}

/// Bulleted queries of a summarisation prompt.
pub fn summary_prompt_queries(prompt: &str) -> Vec<&str> {
    prompt
        .lines()
        .skip_while(|l| *l != "Queries:")
        .skip(1)
        .take_while(|l| *l != "Summary:")
        .filter_map(|l| l.strip_prefix("- "))
        .collect()
}

/// Splits on commas and newlines, trims, lowercases, drops empties,
/// deduplicates keeping first occurrences and keeps at most `max_tags`.
pub fn parse_tags(output: &str, max_tags: usize) -> Vec<String> {
    let mut tags: Vec<String> = Vec::new();
    for piece in output.split([',', '\n']) {
        if tags.len() >= max_tags {
            break;
        }
        let tag = piece.trim().to_lowercase();
        if !tag.is_empty() && !tags.contains(&tag) {
            tags.push(tag);
        }
    }
    tags
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "class_id")]
pub enum LabelMatch {
    Exact(ClassId),
    Substring(ClassId),
    NoMatch,
}

impl LabelMatch {
    pub fn class_id(&self) -> Option<ClassId> {
        match self {
            LabelMatch::Exact(id) | LabelMatch::Substring(id) => Some(*id),
            LabelMatch::NoMatch => None,
        }
    }
}

/// Lowercase, trim, collapse whitespace runs, map spaces and hyphens to `_`.
pub fn normalize_label(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push('_');
        }
        for c in word.chars().flat_map(char::to_lowercase) {
            out.push(if c == '-' { '_' } else { c });
        }
    }
    out
}

fn after_class_marker(output: &str) -> &str {
    let lower = output.to_ascii_lowercase();
    match lower.find("class:") {
        Some(pos) => &output[pos + "class:".len()..],
        None => output,
    }
}

/// Maps raw LLM output onto one of `candidates`.
///
/// The first non-empty line after a `Class:` marker (or of the whole output)
/// is normalised and compared with each normalised candidate name. Failing
/// an exact hit, the longest candidate contained in the normalised full
/// output wins, earlier candidates winning ties.
pub fn parse_label(output: &str, candidates: &[(ClassId, &str)]) -> LabelMatch {
    let answer = after_class_marker(output)
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .map(normalize_label)
        .unwrap_or_default();
    let normalized: Vec<(ClassId, String)> = candidates
        .iter()
        .map(|(id, name)| (*id, normalize_label(name)))
        .collect();
    if let Some((id, _)) = normalized
        .iter()
        .find(|(_, n)| !n.is_empty() && *n == answer)
    {
        return LabelMatch::Exact(*id);
    }
    let full = normalize_label(output);
    let mut best: Option<(ClassId, usize)> = None;
    for (id, n) in &normalized {
        if !n.is_empty() && full.contains(n.as_str()) && best.is_none_or(|(_, len)| n.len() > len) {
            best = Some((*id, n.len()));
        }
    }
    match best {
        Some((id, _)) => LabelMatch::Substring(id),
        None => LabelMatch::NoMatch,
    }
}

/// Joins tags the way an LLM is asked to emit them.
pub fn join_tags(tags: &[String]) -> String {
    tags.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}
