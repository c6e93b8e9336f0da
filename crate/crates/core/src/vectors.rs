//! Queries over a pre-built word/term vector model: pairwise similarity,
//! nearest associates, cluster center, set-to-set similarity.
//!
//! The model is an exact in-memory table; nearest-neighbor queries are a
//! linear scan, which is cheap and testable at desk scale.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

/// Means with a magnitude below this are treated as numerically zero.
pub const ZERO_MAGNITUDE: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum VectorError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model at line {line}: {reason}")]
    MalformedModel { line: usize, reason: String },
    #[error("zero vector for term {0:?}")]
    ZeroVector(String),
    #[error("unknown term {0:?}")]
    UnknownTerm(String),
    #[error("term list is empty")]
    EmptyInput,
    #[error("mean vector is numerically zero")]
    ZeroMean,
}

impl VectorError {
    pub fn code(&self) -> &'static str {
        match self {
            VectorError::Io { .. } => "io",
            VectorError::MalformedModel { .. } => "malformed_model",
            VectorError::ZeroVector(_) => "zero_vector",
            VectorError::UnknownTerm(_) => "unknown_term",
            VectorError::EmptyInput => "empty_input",
            VectorError::ZeroMean => "zero_mean",
        }
    }

    fn malformed(line: usize, reason: impl Into<String>) -> Self {
        VectorError::MalformedModel {
            line,
            reason: reason.into(),
        }
    }
}

/// An immutable word/term embedding table. Multi-word terms are stored with
/// underscores; query terms may use spaces, which are normalized away.
#[derive(Debug, Clone)]
pub struct VectorModel {
    dimension: usize,
    entries: BTreeMap<String, Vec<f64>>,
}

fn canon_term(term: &str) -> String {
    term.trim().replace(' ', "_")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn magnitude(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = magnitude(a);
    let nb = magnitude(b);
    if na < ZERO_MAGNITUDE || nb < ZERO_MAGNITUDE {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

impl VectorModel {
    /// Parse the plain-text interchange format: a `N D` header line, then N
    /// lines `term v1 ... vD`, whitespace-delimited, UTF-8.
    pub fn parse(content: &str) -> Result<Self, VectorError> {
        let mut lines = content.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| VectorError::malformed(1, "empty model file"))?;
        let mut parts = header.split_whitespace();
        let count: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| VectorError::malformed(1, "header must be `N D`"))?;
        let dimension: usize = parts
            .next()
            .and_then(|p| p.parse().ok())
            .ok_or_else(|| VectorError::malformed(1, "header must be `N D`"))?;
        if parts.next().is_some() {
            return Err(VectorError::malformed(1, "header must be `N D`"));
        }
        if dimension == 0 {
            return Err(VectorError::malformed(1, "dimension must be >= 1"));
        }

        let mut entries = BTreeMap::new();
        let mut seen = 0usize;
        for (idx, line) in lines {
            let lineno = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let term = fields.next().expect("non-empty line has a first field");
            let vector: Vec<f64> = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| VectorError::malformed(lineno, format!("bad component {f:?}")))
                })
                .collect::<Result<_, _>>()?;
            if vector.len() != dimension {
                return Err(VectorError::malformed(
                    lineno,
                    format!("expected {dimension} components, got {}", vector.len()),
                ));
            }
            if magnitude(&vector) < ZERO_MAGNITUDE {
                return Err(VectorError::ZeroVector(term.to_string()));
            }
            if entries.insert(term.to_string(), vector).is_some() {
                return Err(VectorError::malformed(
                    lineno,
                    format!("duplicate term {term:?}"),
                ));
            }
            seen += 1;
        }
        if seen != count {
            return Err(VectorError::malformed(
                0,
                format!("header declared {count} entries, found {seen}"),
            ));
        }
        Ok(VectorModel { dimension, entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, VectorError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| VectorError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&content)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn vector(&self, term: &str) -> Result<&[f64], VectorError> {
        let key = canon_term(term);
        self.entries
            .get(&key)
            .map(Vec::as_slice)
            .ok_or_else(|| VectorError::UnknownTerm(term.to_string()))
    }

    /// Cosine similarity of two terms, in [-1, 1].
    pub fn similarity(&self, t1: &str, t2: &str) -> Result<f64, VectorError> {
        Ok(cosine(self.vector(t1)?, self.vector(t2)?))
    }

    /// The `k` terms most similar to `term` (excluding it), descending, ties
    /// broken lexicographically. This is an exact scan over the model.
    pub fn nearest(&self, term: &str, k: usize) -> Result<Vec<(String, f64)>, VectorError> {
        let origin = self.vector(term)?;
        let key = canon_term(term);
        let mut scored: Vec<(String, f64)> = self
            .entries
            .iter()
            .filter(|(t, _)| **t != key)
            .map(|(t, v)| (t.clone(), cosine(origin, v)))
            .collect();
        scored.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("cosine is finite")
                .then_with(|| a.0.cmp(&b.0))
        });
        scored.truncate(k);
        Ok(scored)
    }

    fn mean_vector(&self, terms: &[String]) -> Result<Vec<f64>, VectorError> {
        if terms.is_empty() {
            return Err(VectorError::EmptyInput);
        }
        let mut mean = vec![0.0; self.dimension];
        for term in terms {
            let v = self.vector(term)?;
            for (m, x) in mean.iter_mut().zip(v) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= terms.len() as f64;
        }
        Ok(mean)
    }

    /// The input term whose vector is most similar to the arithmetic mean of
    /// the input vectors; ties break lexicographically.
    pub fn cluster_center(&self, terms: &[String]) -> Result<(String, f64), VectorError> {
        let mean = self.mean_vector(terms)?;
        let mut candidates: Vec<String> = terms.iter().map(|t| canon_term(t)).collect();
        candidates.sort();
        candidates.dedup();
        let mut best: Option<(String, f64)> = None;
        for term in candidates {
            let sim = cosine(&mean, self.vector(&term)?);
            let better = match &best {
                None => true,
                Some((_, s)) => sim > *s,
            };
            if better {
                best = Some((term, sim));
            }
        }
        Ok(best.expect("terms list is non-empty"))
    }

    /// Cosine similarity between the mean vectors of two term sets.
    pub fn set_similarity(&self, a: &[String], b: &[String]) -> Result<f64, VectorError> {
        let ma = self.mean_vector(a)?;
        let mb = self.mean_vector(b)?;
        if magnitude(&ma) < ZERO_MAGNITUDE || magnitude(&mb) < ZERO_MAGNITUDE {
            return Err(VectorError::ZeroMean);
        }
        Ok(cosine(&ma, &mb))
    }
}
