//! Std companion to `inca-core`: HTTP backends, embedding cache, state
//! files, datasets, synthetic worlds, the evaluation harness and the CLI.

pub mod cache;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod harness;
pub mod remote;
pub mod store;
pub mod synthetic;

pub use error::{Error, Result};
