//! Embedding cache keyed by (embedder identity, exact text).
//!
//! The optional backing file is JSON Lines, one record per cached vector:
//!
//! ```text
//! {"identity":"embed:model@url","text":"paycheck deposit","vector":[0.12,-0.5,...]}
//! ```
//!
//! Records are only ever appended. On load, later records win and lines that
//! fail to parse (a torn final write, for instance) are skipped with a
//! warning. Floats use shortest round-trip text, so a reloaded vector is
//! bit-identical to the one stored.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use inca_core::Embedder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct CacheRecord<'a> {
    identity: std::borrow::Cow<'a, str>,
    text: std::borrow::Cow<'a, str>,
    vector: std::borrow::Cow<'a, [f64]>,
}

#[derive(Default)]
struct CacheState {
    entries: HashMap<(String, String), Vec<f64>>,
    file: Option<BufWriter<File>>,
}

#[derive(Default)]
pub struct EmbeddingCache {
    state: Mutex<CacheState>,
    path: Option<PathBuf>,
}

impl EmbeddingCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a persistent cache file and loads its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
            for (n, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(&path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheRecord<'_>>(&line) {
                    Ok(r) => {
                        entries.insert(
                            (r.identity.into_owned(), r.text.into_owned()),
                            r.vector.into_owned(),
                        );
                    }
                    Err(e) => {
                        log::warn!("{}:{}: skipping cache record: {e}", path.display(), n + 1)
                    }
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        let mut file = BufWriter::new(file);
        // terminate a torn final record so the next append starts a new line
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.last().is_some_and(|b| *b != b'\n') {
            writeln!(file)
                .and_then(|_| file.flush())
                .map_err(|e| Error::io(&path, e))?;
        }
        Ok(Self {
            state: Mutex::new(CacheState {
                entries,
                file: Some(file),
            }),
            path: Some(path),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, identity: &str, text: &str) -> Option<Vec<f64>> {
        self.state
            .lock()
            .unwrap()
            .entries
            .get(&(identity.to_owned(), text.to_owned()))
            .cloned()
    }

    fn put_all(&self, identity: &str, items: &[(&str, &[f64])]) {
        let mut state = self.state.lock().unwrap();
        let mut write_failed = None;
        if let Some(file) = state.file.as_mut() {
            for (text, vector) in items {
                let record = CacheRecord {
                    identity: identity.into(),
                    text: (*text).into(),
                    vector: (*vector).into(),
                };
                let line = serde_json::to_string(&record).expect("cache records serialize");
                if let Err(e) = writeln!(file, "{line}") {
                    write_failed = Some(e);
                    break;
                }
            }
            if write_failed.is_none() {
                if let Err(e) = file.flush() {
                    write_failed = Some(e);
                }
            }
        }
        if let Some(e) = write_failed {
            log::warn!("embedding cache write failed, continuing in memory only: {e}");
            state.file = None;
        }
        for (text, vector) in items {
            state
                .entries
                .insert((identity.to_owned(), (*text).to_owned()), vector.to_vec());
        }
    }
}

/// Embedder wrapper that consults the cache first and sends only misses to
/// the wrapped backend.
pub struct CachedEmbedder<E> {
    inner: E,
    cache: Arc<EmbeddingCache>,
}

impl<E: Embedder> CachedEmbedder<E> {
    pub fn new(inner: E, cache: Arc<EmbeddingCache>) -> Self {
        Self { inner, cache }
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn cache(&self) -> &EmbeddingCache {
        &self.cache
    }
}

impl<E: Embedder> Embedder for CachedEmbedder<E> {
    fn identity(&self) -> &str {
        self.inner.identity()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed_batch(&self, texts: &[&str]) -> inca_core::Result<Vec<Vec<f64>>> {
        let identity = self.inner.identity();
        let mut out: Vec<Option<Vec<f64>>> =
            texts.iter().map(|t| self.cache.get(identity, t)).collect();
        let mut misses: Vec<&str> = Vec::new();
        for (t, v) in texts.iter().zip(&out) {
            if v.is_none() && !misses.contains(t) {
                misses.push(t);
            }
        }
        if !misses.is_empty() {
            let fresh = self.inner.embed_batch(&misses)?;
            if fresh.len() != misses.len() {
                return Err(inca_core::Error::BackendUnavailable(format!(
                    "embedder {identity} returned {} vectors for {} texts",
                    fresh.len(),
                    misses.len()
                )));
            }
            let items: Vec<(&str, &[f64])> = misses
                .iter()
                .zip(&fresh)
                .map(|(t, v)| (*t, v.as_slice()))
                .collect();
            self.cache.put_all(identity, &items);
            for (slot, text) in out.iter_mut().zip(texts) {
                if slot.is_none() {
                    let i = misses.iter().position(|m| m == text).unwrap();
                    *slot = Some(fresh[i].clone());
                }
            }
        }
        Ok(out.into_iter().map(|v| v.unwrap()).collect())
    }
}
