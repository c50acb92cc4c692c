//! External continual learner: per-class Gaussian means over tag embeddings,
//! one shared covariance updated as a running mean of per-class deviation
//! matrices, and Mahalanobis top-k routing.
//!
//! Each class is folded exactly once. Its deviation matrix is computed,
//! merged into the shared covariance and dropped, so the registry stores
//! `J` mean vectors and a single `h × h` matrix regardless of how many
//! classes have been seen.

use alloc::borrow::Cow;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};

/// Smallest quadratic form accepted as round-off before it is clamped to 0.
const QUADRATIC_FORM_FLOOR: f64 = -1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassProfile {
    pub class_id: ClassId,
    pub name: String,
    pub mean: Vec<f64>,
    pub tag_count: usize,
    pub insertion_index: usize,
    pub summary: String,
}

/// Ridge added to the shared covariance before inversion:
/// `ε = max(epsilon_abs, epsilon_rel · trace(Σ) / h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    pub epsilon_abs: f64,
    pub epsilon_rel: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self {
            epsilon_abs: 1e-10,
            epsilon_rel: 1e-4,
        }
    }
}

impl Regularization {
    pub const NONE: Regularization = Regularization {
        epsilon_abs: 0.0,
        epsilon_rel: 0.0,
    };

    pub fn epsilon_for(&self, matrix: &Matrix) -> f64 {
        let h = matrix.dim().max(1) as f64;
        self.epsilon_abs.max(self.epsilon_rel * matrix.trace() / h)
    }
}

#[derive(Debug, Clone)]
struct CachedPrecision {
    epsilon: f64,
    matrix: Matrix,
}

/// The covariance shared by every class.
#[derive(Debug, Clone)]
pub struct SharedCovariance {
    matrix: Matrix,
    classes_folded: usize,
    regularization: Regularization,
    cached_precision: Option<CachedPrecision>,
}

impl SharedCovariance {
    pub fn new(dimension: usize, regularization: Regularization) -> Self {
        Self {
            matrix: Matrix::zeros(dimension),
            classes_folded: 0,
            regularization,
            cached_precision: None,
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn classes_folded(&self) -> usize {
        self.classes_folded
    }

    pub fn regularization(&self) -> Regularization {
        self.regularization
    }

    /// Epsilon recorded with the cached precision, if one is cached.
    pub fn cached_epsilon(&self) -> Option<f64> {
        self.cached_precision.as_ref().map(|c| c.epsilon)
    }

    /// `Σ_j = ((j − 1) Σ_{j−1} + Δ_j) / j`.
    fn fold(&mut self, delta: &Matrix) {
        let j = (self.classes_folded + 1) as f64;
        let prev = j - 1.0;
        let h = self.matrix.dim();
        for r in 0..h {
            for c in 0..h {
                let updated = (prev * self.matrix.get(r, c) + delta.get(r, c)) / j;
                self.matrix.set(r, c, updated);
            }
        }
        self.classes_folded += 1;
        self.cached_precision = None;
    }

    fn compute_precision(&self) -> Result<CachedPrecision> {
        let epsilon = self.regularization.epsilon_for(&self.matrix);
        let shifted = self.matrix.shifted(epsilon);
        let chol = Cholesky::factor(&shifted).map_err(|e| match e {
            Error::NumericalFailure(msg) => Error::NumericalFailure(alloc::format!(
                "shared covariance is not invertible with epsilon {epsilon:e}: {msg}"
            )),
            other => other,
        })?;
        Ok(CachedPrecision {
            epsilon,
            matrix: chol.inverse(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredClass {
    pub class_id: ClassId,
    pub distance: f64,
}

/// Ordered set of learned classes plus the shared covariance.
///
/// Reads (`score_instance`, `top_k`, `precision`) take `&self` and may run
/// concurrently; `finalize_class` needs `&mut self`.
#[derive(Debug, Clone)]
pub struct Registry {
    dimension: usize,
    profiles: Vec<ClassProfile>,
    shared: SharedCovariance,
}

impl Registry {
    pub fn new(dimension: usize) -> Self {
        Self::with_regularization(dimension, Regularization::default())
    }

    pub fn with_regularization(dimension: usize, regularization: Regularization) -> Self {
        Self {
            dimension,
            profiles: Vec::new(),
            shared: SharedCovariance::new(dimension, regularization),
        }
    }

    /// Rebuilds a registry from persisted parts, checking every invariant.
    pub fn from_parts(
        dimension: usize,
        mut profiles: Vec<ClassProfile>,
        matrix: Matrix,
        classes_folded: usize,
        regularization: Regularization,
    ) -> Result<Self> {
        let integrity = |msg: String| Err(Error::IntegrityFailure(msg));
        if matrix.dim() != dimension {
            return integrity(alloc::format!(
                "covariance is {0}x{0} but dimension is {dimension}",
                matrix.dim()
            ));
        }
        if !matrix.is_finite() {
            return integrity("covariance has non-finite entries".into());
        }
        if matrix.asymmetry() > 1e-12 {
            return integrity("covariance is not symmetric".into());
        }
        if classes_folded != profiles.len() {
            return integrity(alloc::format!(
                "classes_folded is {classes_folded} but {} classes are stored",
                profiles.len()
            ));
        }
        if !(regularization.epsilon_abs >= 0.0 && regularization.epsilon_rel >= 0.0) {
            return integrity("regularization must be nonnegative".into());
        }
        profiles.sort_by_key(|p| p.insertion_index);
        for (expected, p) in profiles.iter().enumerate() {
            if p.insertion_index != expected {
                return integrity(alloc::format!(
                    "insertion indices are not contiguous at class {:?}",
                    p.name
                ));
            }
            if p.mean.len() != dimension {
                return integrity(alloc::format!(
                    "class {:?} has a {}-dimensional mean, expected {dimension}",
                    p.name,
                    p.mean.len()
                ));
            }
            if p.mean.iter().any(|v| !v.is_finite()) {
                return integrity(alloc::format!("class {:?} has a non-finite mean", p.name));
            }
            if p.tag_count == 0 {
                return integrity(alloc::format!("class {:?} has zero tags", p.name));
            }
        }
        for (i, a) in profiles.iter().enumerate() {
            for b in &profiles[i + 1..] {
                if a.class_id == b.class_id || a.name == b.name {
                    return integrity(alloc::format!("duplicate class {:?}", b.name));
                }
            }
        }
        let mut shared = SharedCovariance::new(dimension, regularization);
        shared.matrix = matrix;
        shared.classes_folded = classes_folded;
        Ok(Self {
            dimension,
            profiles,
            shared,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Profiles in insertion order.
    pub fn profiles(&self) -> &[ClassProfile] {
        &self.profiles
    }

    pub fn shared(&self) -> &SharedCovariance {
        &self.shared
    }

    pub fn profile(&self, id: ClassId) -> Option<&ClassProfile> {
        self.profiles.iter().find(|p| p.class_id == id)
    }

    pub fn profile_by_name(&self, name: &str) -> Option<&ClassProfile> {
        self.profiles.iter().find(|p| p.name == name)
    }

    pub fn contains_name(&self, name: &str) -> bool {
        self.profile_by_name(name).is_some()
    }

    /// Next unused class id.
    pub fn next_class_id(&self) -> ClassId {
        ClassId(
            self.profiles
                .iter()
                .map(|p| p.class_id.0 + 1)
                .max()
                .unwrap_or(0),
        )
    }

    pub fn set_summary(&mut self, id: ClassId, summary: String) -> Result<()> {
        let profile = self
            .profiles
            .iter_mut()
            .find(|p| p.class_id == id)
            .ok_or(Error::UnknownClass(id))?;
        profile.summary = summary;
        Ok(())
    }

    pub fn set_regularization(&mut self, regularization: Regularization) {
        self.shared.regularization = regularization;
        self.shared.cached_precision = None;
    }

    /// Computes the class mean and deviation matrix from `tag_embeddings`,
    /// folds the deviation matrix into the shared covariance and stores the
    /// new profile. The deviation matrix is not retained.
    pub fn finalize_class(
        &mut self,
        class_id: ClassId,
        name: &str,
        tag_embeddings: &[Vec<f64>],
    ) -> Result<&ClassProfile> {
        if tag_embeddings.is_empty() {
            return Err(Error::EmptyInput("class has no tag embeddings"));
        }
        let h = self.dimension;
        for z in tag_embeddings {
            if z.len() != h {
                return Err(Error::DimensionMismatch {
                    expected: h,
                    found: z.len(),
                });
            }
            if z.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(alloc::format!(
                    "non-finite tag embedding for class {name:?}"
                )));
            }
        }
        if self
            .profiles
            .iter()
            .any(|p| p.class_id == class_id || p.name == name)
        {
            return Err(Error::DuplicateClass(name.into()));
        }

        let (mean, delta) = class_statistics(tag_embeddings, h);
        if tag_embeddings.len() == 1 {
            log::warn!("class {name:?} has a single tag; its covariance contribution is zero");
        }
        self.shared.fold(&delta);

        let insertion_index = self.profiles.len();
        self.profiles.push(ClassProfile {
            class_id,
            name: name.into(),
            mean,
            tag_count: tag_embeddings.len(),
            insertion_index,
            summary: String::new(),
        });
        Ok(&self.profiles[insertion_index])
    }

    /// Inverse of `Σ + εI`, computed once and cached until the next
    /// `finalize_class`.
    pub fn regularized_precision(&mut self) -> Result<&Matrix> {
        if self.profiles.is_empty() {
            return Err(Error::NoClasses);
        }
        if self.shared.cached_precision.is_none() {
            self.shared.cached_precision = Some(self.shared.compute_precision()?);
        }
        Ok(&self.shared.cached_precision.as_ref().unwrap().matrix)
    }

    /// Precision for read-only callers: the cached one when present,
    /// otherwise computed on the fly without caching.
    pub fn precision(&self) -> Result<Cow<'_, Matrix>> {
        if self.profiles.is_empty() {
            return Err(Error::NoClasses);
        }
        match &self.shared.cached_precision {
            Some(cached) => Ok(Cow::Borrowed(&cached.matrix)),
            None => Ok(Cow::Owned(self.shared.compute_precision()?.matrix)),
        }
    }

    /// Averaged Mahalanobis distance from the tag embeddings of one instance
    /// to every class, ascending; ties go to the earlier-inserted class.
    pub fn score_instance(&self, tag_embeddings: &[Vec<f64>]) -> Result<Vec<ScoredClass>> {
        if self.profiles.is_empty() {
            return Err(Error::NoClasses);
        }
        if tag_embeddings.is_empty() {
            return Err(Error::EmptyInput("instance has no tag embeddings"));
        }
        for z in tag_embeddings {
            if z.len() != self.dimension {
                return Err(Error::DimensionMismatch {
                    expected: self.dimension,
                    found: z.len(),
                });
            }
        }
        let precision = self.precision()?;
        let m = tag_embeddings.len() as f64;
        let mut scored = Vec::with_capacity(self.profiles.len());
        for profile in &self.profiles {
            let mut total = 0.0;
            for z in tag_embeddings {
                total += mahalanobis(z, &profile.mean, &precision)?;
            }
            scored.push((
                profile.insertion_index,
                ScoredClass {
                    class_id: profile.class_id,
                    distance: total / m,
                },
            ));
        }
        scored.sort_by(|(ia, a), (ib, b)| a.distance.total_cmp(&b.distance).then(ia.cmp(ib)));
        Ok(scored.into_iter().map(|(_, s)| s).collect())
    }

    pub fn top_k(&self, tag_embeddings: &[Vec<f64>], k: usize) -> Result<Vec<ClassId>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let scored = self.score_instance(tag_embeddings)?;
        Ok(scored.into_iter().take(k).map(|s| s.class_id).collect())
    }
}

/// Mean of the embeddings and the mean outer product of their deviations.
fn class_statistics(embeddings: &[Vec<f64>], h: usize) -> (Vec<f64>, Matrix) {
    let r = embeddings.len() as f64;
    let mut mean = vec![0.0; h];
    for z in embeddings {
        for (m, v) in mean.iter_mut().zip(z) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= r);

    let mut delta = Matrix::zeros(h);
    let mut dev = vec![0.0; h];
    for z in embeddings {
        for ((d, v), m) in dev.iter_mut().zip(z).zip(&mean) {
            *d = v - m;
        }
        for i in 0..h {
            for j in 0..=i {
                let v = delta.get(i, j) + dev[i] * dev[j];
                delta.set(i, j, v);
            }
        }
    }
    for i in 0..h {
        for j in 0..=i {
            let v = delta.get(i, j) / r;
            delta.set(i, j, v);
            delta.set(j, i, v);
        }
    }
    (mean, delta)
}

/// `sqrt((z − μ)ᵀ P (z − μ))`.
pub fn mahalanobis(z: &[f64], mean: &[f64], precision: &Matrix) -> Result<f64> {
    let h = precision.dim();
    if z.len() != h || mean.len() != h {
        return Err(Error::DimensionMismatch {
            expected: h,
            found: if z.len() != h { z.len() } else { mean.len() },
        });
    }
    let diff: Vec<f64> = z.iter().zip(mean).map(|(a, b)| a - b).collect();
    let q = precision.quadratic_form(&diff);
    if q.is_nan() || q < QUADRATIC_FORM_FLOOR {
        return Err(Error::NumericalFailure(alloc::format!(
            "negative quadratic form {q:e}; precision is not positive semidefinite"
        )));
    }
    Ok(libm::sqrt(q.max(0.0)))
}
