//! Text-to-vector backends.
//!
//! [`Embedder`] is the interface the pipeline talks to. Two in-memory
//! implementations live here: [`DeterministicEmbedder`], a seeded character
//! 3-gram hash that stands in for a sentence encoder in tests, and
//! [`TableEmbedder`], a lookup table used to place synthetic data exactly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub trait Embedder: Send + Sync {
    /// Names the backing model and configuration. Cached vectors are keyed
    /// by this string.
    fn identity(&self) -> &str;

    fn dimension(&self) -> usize;

    /// One vector per input, in input order.
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>>;
}

impl<E: Embedder + ?Sized> Embedder for alloc::sync::Arc<E> {
    fn identity(&self) -> &str {
        (**self).identity()
    }
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        (**self).embed_batch(texts)
    }
}

/// Calls `embedder` after validating the inputs and checks that the output
/// has one finite vector of the advertised dimension per input.
pub fn embed_texts<E: Embedder + ?Sized>(embedder: &E, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
    if texts.is_empty() {
        return Err(Error::EmptyInput("no texts to embed"));
    }
    if texts.iter().any(|t| t.is_empty()) {
        return Err(Error::EmptyInput("cannot embed an empty string"));
    }
    let vectors = embedder.embed_batch(texts)?;
    if vectors.len() != texts.len() {
        return Err(Error::BackendUnavailable(format!(
            "embedder {} returned {} vectors for {} texts",
            embedder.identity(),
            vectors.len(),
            texts.len()
        )));
    }
    let h = embedder.dimension();
    for v in &vectors {
        if v.len() != h {
            return Err(Error::DimensionMismatch {
                expected: h,
                found: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::NumericalFailure(format!(
                "embedder {} returned a non-finite vector",
                embedder.identity()
            )));
        }
    }
    Ok(vectors)
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Unit-norm vector built by summing one seeded pseudo-random direction per
/// character 3-gram of the lowercased text (padded with start/end markers).
/// Strings that share 3-grams share components, so their cosine similarity
/// is higher than that of unrelated strings.
pub fn deterministic_embed(seed: u64, text: &str, h: usize) -> Result<Vec<f64>> {
    if text.is_empty() {
        return Err(Error::EmptyInput("cannot embed an empty string"));
    }
    if h < 2 {
        return Err(Error::InvalidArgument(format!(
            "embedding dimension must be at least 2, got {h}"
        )));
    }
    let mut chars: Vec<char> = Vec::with_capacity(text.len() + 2);
    chars.push('\u{2}');
    chars.extend(text.chars().flat_map(char::to_lowercase));
    chars.push('\u{3}');

    let mut acc = vec![0.0f64; h];
    let mut buf = [0u8; 12];
    for gram in chars.windows(3) {
        let mut len = 0;
        for c in gram {
            len += c.encode_utf8(&mut buf[len..]).len();
        }
        let mut state = fnv1a(seed, &buf[..len]);
        for a in acc.iter_mut() {
            let bits = splitmix64(&mut state) >> 11;
            *a += (bits as f64) * (2.0 / (1u64 << 53) as f64) - 1.0;
        }
    }
    let norm = libm::sqrt(acc.iter().map(|x| x * x).sum::<f64>());
    if norm == 0.0 {
        acc[0] = 1.0;
    } else {
        acc.iter_mut().for_each(|x| *x /= norm);
    }
    Ok(acc)
}

#[derive(Debug, Clone)]
pub struct DeterministicEmbedder {
    seed: u64,
    dimension: usize,
    identity: String,
}

impl DeterministicEmbedder {
    pub fn new(seed: u64, dimension: usize) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidArgument(format!(
                "embedding dimension must be at least 2, got {dimension}"
            )));
        }
        Ok(Self {
            seed,
            dimension,
            identity: format!("deterministic-3gram/seed={seed}/h={dimension}"),
        })
    }
}

impl Embedder for DeterministicEmbedder {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts
            .iter()
            .map(|t| deterministic_embed(self.seed, t, self.dimension))
            .collect()
    }
}

/// Exact text → vector table. Texts missing from the table are delegated to
/// the fallback embedder when one is configured.
#[derive(Clone)]
pub struct TableEmbedder {
    identity: String,
    dimension: usize,
    table: BTreeMap<String, Vec<f64>>,
    fallback: Option<DeterministicEmbedder>,
}

impl TableEmbedder {
    pub fn new(identity: impl Into<String>, dimension: usize) -> Self {
        Self {
            identity: identity.into(),
            dimension,
            table: BTreeMap::new(),
            fallback: None,
        }
    }

    pub fn with_fallback(mut self, fallback: DeterministicEmbedder) -> Self {
        self.fallback = Some(fallback);
        self
    }

    pub fn insert(&mut self, text: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                found: vector.len(),
            });
        }
        self.table.insert(text.into(), vector);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Embedder for TableEmbedder {
    fn identity(&self) -> &str {
        &self.identity
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>> {
        texts
            .iter()
            .map(|t| match (self.table.get(*t), &self.fallback) {
                (Some(v), _) => Ok(v.clone()),
                (None, Some(f)) => deterministic_embed(f.seed, t, self.dimension),
                (None, None) => Err(Error::BackendUnavailable(format!(
                    "no table entry for {t:?}"
                ))),
            })
            .collect()
    }
}
