//! Core of the InCA class-incremental text classifier.
//!
//! Classes are learned one at a time. Each class contributes the mean of its
//! tag embeddings and a single deviation matrix that is folded into one
//! shared covariance and then discarded. Queries are routed to the `k`
//! nearest classes by averaged Mahalanobis distance, and an LLM picks the
//! final label from the stored summaries of those candidates.
//!
//! This crate is `no_std` (it needs `alloc`). Network clients, persistence,
//! dataset ingestion and the command line live in the `inca` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod ecl;
pub mod embed;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod llm;
pub mod pipeline;
pub mod prompt;

pub use ecl::{ClassId, ClassProfile, Registry, Regularization, ScoredClass, SharedCovariance};
pub use embed::{DeterministicEmbedder, Embedder};
pub use error::{Error, Result};
pub use llm::{ChatClient, CompletionParams};
pub use pipeline::{InCASystem, PipelineConfig, Prediction};
