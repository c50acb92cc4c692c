//! Learner state persistence.
//!
//! A state file is a single compact JSON object with fields in a fixed order:
//!
//! | field | content |
//! |-------|---------|
//! | `format_version` | always `"inca-state/1"` |
//! | `embedder` | `{identity, dimension}` of the embedder the means live in |
//! | `config` | pipeline configuration snapshot |
//! | `classes` | `[{class_id, name, insertion_index, tag_count, mean, summary}]` in insertion order |
//! | `shared_covariance` | `{dimension, classes_folded, epsilon_abs, epsilon_rel, matrix}` with `matrix` row-major |
//!
//! Floats are written in shortest round-trip form, so decode → encode is
//! byte-identical and every distance computed from a reloaded state is
//! bit-identical to the original. No training text is stored.

use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use inca_core::linalg::Matrix;
use inca_core::{
    ChatClient, ClassId, ClassProfile, Embedder, InCASystem, PipelineConfig, Registry,
    Regularization,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FORMAT_VERSION: &str = "inca-state/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderRecord {
    pub identity: String,
    pub dimension: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassRecord {
    pub class_id: ClassId,
    pub name: String,
    pub insertion_index: usize,
    pub tag_count: usize,
    pub mean: Vec<f64>,
    pub summary: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceRecord {
    pub dimension: usize,
    pub classes_folded: usize,
    pub epsilon_abs: f64,
    pub epsilon_rel: f64,
    pub matrix: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDocument {
    pub format_version: String,
    pub embedder: EmbedderRecord,
    pub config: PipelineConfig,
    pub classes: Vec<ClassRecord>,
    pub shared_covariance: CovarianceRecord,
}

impl StateDocument {
    pub fn from_registry(
        registry: &Registry,
        embedder_identity: &str,
        config: &PipelineConfig,
    ) -> Self {
        let shared = registry.shared();
        let reg = shared.regularization();
        Self {
            format_version: FORMAT_VERSION.into(),
            embedder: EmbedderRecord {
                identity: embedder_identity.into(),
                dimension: registry.dimension(),
            },
            config: config.clone(),
            classes: registry
                .profiles()
                .iter()
                .map(|p| ClassRecord {
                    class_id: p.class_id,
                    name: p.name.clone(),
                    insertion_index: p.insertion_index,
                    tag_count: p.tag_count,
                    mean: p.mean.clone(),
                    summary: p.summary.clone(),
                })
                .collect(),
            shared_covariance: CovarianceRecord {
                dimension: registry.dimension(),
                classes_folded: shared.classes_folded(),
                epsilon_abs: reg.epsilon_abs,
                epsilon_rel: reg.epsilon_rel,
                matrix: shared.matrix().as_slice().to_vec(),
            },
        }
    }

    pub fn from_system(system: &InCASystem) -> Self {
        Self::from_registry(
            system.registry(),
            system.embedder().identity(),
            system.config(),
        )
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension
    }

    /// Rebuilds the registry, checking every cross-reference.
    pub fn to_registry(&self) -> Result<Registry> {
        let h = self.embedder.dimension;
        let cov = &self.shared_covariance;
        if cov.dimension != h {
            return Err(Error::IntegrityFailure(format!(
                "covariance dimension {} differs from embedder dimension {h}",
                cov.dimension
            )));
        }
        let matrix = Matrix::from_row_major(h, cov.matrix.clone()).map_err(|_| {
            Error::IntegrityFailure(format!(
                "covariance has {} entries, expected {}",
                cov.matrix.len(),
                h * h
            ))
        })?;
        let profiles = self
            .classes
            .iter()
            .map(|c| ClassProfile {
                class_id: c.class_id,
                name: c.name.clone(),
                mean: c.mean.clone(),
                tag_count: c.tag_count,
                insertion_index: c.insertion_index,
                summary: c.summary.clone(),
            })
            .collect();
        Registry::from_parts(
            h,
            profiles,
            matrix,
            cov.classes_folded,
            Regularization {
                epsilon_abs: cov.epsilon_abs,
                epsilon_rel: cov.epsilon_rel,
            },
        )
        .map_err(|e| match e {
            inca_core::Error::IntegrityFailure(msg) => Error::IntegrityFailure(msg),
            other => Error::Core(other),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut bytes = serde_json::to_vec(self).expect("state documents serialize");
        bytes.push(b'\n');
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_slice(bytes)
            .map_err(|e| Error::IntegrityFailure(format!("state is not valid JSON: {e}")))?;
        match value.get("format_version").and_then(|v| v.as_str()) {
            Some(FORMAT_VERSION) => {}
            Some(other) => {
                return Err(Error::SchemaMismatch(format!(
                    "unsupported format_version {other:?}, expected {FORMAT_VERSION:?}"
                )))
            }
            None => return Err(Error::SchemaMismatch("missing format_version".into())),
        }
        let doc: StateDocument = serde_json::from_value(value)
            .map_err(|e| Error::IntegrityFailure(format!("malformed state: {e}")))?;
        doc.to_registry()?;
        Ok(doc)
    }

    /// Builds a live system around this state.
    pub fn into_system(
        self,
        embedder: Arc<dyn Embedder>,
        tagger: Arc<dyn ChatClient>,
        predictor: Arc<dyn ChatClient>,
    ) -> Result<InCASystem> {
        check_embedder(&self, &*embedder)?;
        let registry = self.to_registry()?;
        Ok(InCASystem::from_registry(
            registry,
            embedder,
            tagger,
            predictor,
            self.config,
        )?)
    }
}

/// The embedder must produce vectors in the space the means were built in.
pub fn check_embedder(doc: &StateDocument, embedder: &dyn Embedder) -> Result<()> {
    if doc.embedder.dimension != embedder.dimension() {
        return Err(Error::SchemaMismatch(format!(
            "state has dimension {} but embedder {} produces {}",
            doc.embedder.dimension,
            embedder.identity(),
            embedder.dimension()
        )));
    }
    if doc.embedder.identity != embedder.identity() {
        log::warn!(
            "state was built with embedder {} but {} is configured",
            doc.embedder.identity,
            embedder.identity()
        );
    }
    Ok(())
}

/// Writes atomically: a temporary file in the target directory is renamed
/// over `path`.
pub fn save_document(doc: &StateDocument, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(&doc.to_bytes())
        .and_then(|_| tmp.as_file().sync_all())
        .map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn save(system: &InCASystem, path: impl AsRef<Path>) -> Result<()> {
    save_document(&StateDocument::from_system(system), path)
}

pub fn load(path: impl AsRef<Path>) -> Result<StateDocument> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    StateDocument::from_bytes(&bytes)
}

/// Loads and checks the state against the embedder that will be used with it.
pub fn load_for(path: impl AsRef<Path>, embedder: &dyn Embedder) -> Result<StateDocument> {
    let doc = load(path)?;
    check_embedder(&doc, embedder)?;
    Ok(doc)
}
