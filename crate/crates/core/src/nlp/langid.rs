//! Language identification from character trigram profiles.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::nlp::{NlpError, ResourceError};

/// Profiles keep this many trigrams, ranked by frequency with lexicographic
/// tie-break.
pub const PROFILE_SIZE: usize = 500;

/// Minimum letters required to train a profile.
pub const MIN_TRAIN_LETTERS: usize = 500;

/// A trained trigram profile for one language.
///
/// File format: attribute-value document `{"lang":"..","ngrams":{"abc":0.5}}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LanguageProfile {
    pub lang: String,
    pub ngrams: BTreeMap<String, f64>,
}

impl LanguageProfile {
    pub fn from_json_str(content: &str, path: &str) -> Result<Self, ResourceError> {
        let profile: LanguageProfile = serde_json::from_str(content)
            .map_err(|e| ResourceError::malformed(path, e.line(), e.to_string()))?;
        for (gram, freq) in &profile.ngrams {
            if *freq <= 0.0 {
                return Err(ResourceError::malformed(
                    path,
                    0,
                    format!("trigram {gram:?} has non-positive frequency {freq}"),
                ));
            }
            if gram != &gram.to_lowercase() {
                return Err(ResourceError::malformed(
                    path,
                    0,
                    format!("trigram {gram:?} is not lowercase"),
                ));
            }
        }
        Ok(profile)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ResourceError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let content = std::fs::read_to_string(path).map_err(|source| ResourceError::Io {
            path: display.clone(),
            source,
        })?;
        Self::from_json_str(&content, &display)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("profile serializes")
    }
}

/// Relative trigram frequencies of the lowercased letter runs of `text`,
/// each run padded with `_` at both ends. Frequencies sum to 1 when any
/// trigram exists.
pub fn trigram_frequencies(text: &str) -> BTreeMap<String, f64> {
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    let lower = text.to_lowercase();
    let mut run: Vec<char> = Vec::new();
    let flush = |run: &mut Vec<char>, counts: &mut BTreeMap<String, u64>, total: &mut u64| {
        if run.is_empty() {
            return;
        }
        let mut padded = Vec::with_capacity(run.len() + 2);
        padded.push('_');
        padded.append(run);
        padded.push('_');
        for w in padded.windows(3) {
            *counts.entry(w.iter().collect()).or_insert(0) += 1;
            *total += 1;
        }
    };
    for c in lower.chars() {
        if c.is_alphabetic() {
            run.push(c);
        } else {
            flush(&mut run, &mut counts, &mut total);
        }
    }
    flush(&mut run, &mut counts, &mut total);

    if total == 0 {
        return BTreeMap::new();
    }
    counts
        .into_iter()
        .map(|(gram, count)| (gram, count as f64 / total as f64))
        .collect()
}

/// Train a profile over a corpus with at least [`MIN_TRAIN_LETTERS`]
/// letters: trigram frequencies truncated to the [`PROFILE_SIZE`] most
/// frequent entries (lexicographic tie-break).
pub fn train_profile(corpus: &str, lang: &str) -> Result<LanguageProfile, NlpError> {
    let letters = corpus.chars().filter(|c| c.is_alphabetic()).count();
    if letters < MIN_TRAIN_LETTERS {
        return Err(NlpError::CorpusTooSmall {
            letters,
            min: MIN_TRAIN_LETTERS,
        });
    }
    let freqs = trigram_frequencies(corpus);
    let mut ranked: Vec<(String, f64)> = freqs.into_iter().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("frequencies are finite")
            .then_with(|| a.0.cmp(&b.0))
    });
    ranked.truncate(PROFILE_SIZE);
    Ok(LanguageProfile {
        lang: lang.to_string(),
        ngrams: ranked.into_iter().collect(),
    })
}

/// Cosine similarity of two sparse frequency vectors.
fn cosine_sparse(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    let dot: f64 = small
        .iter()
        .filter_map(|(k, va)| large.get(k).map(|vb| va * vb))
        .sum();
    let norm = |m: &BTreeMap<String, f64>| m.values().map(|v| v * v).sum::<f64>().sqrt();
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// Identify the language of `text` as the profile with the highest cosine
/// similarity to the text's trigram frequencies.
///
/// Confidence is the margin between the best and the runner-up score, or
/// 1.0 when a single profile is loaded. Ties resolve to the
/// lexicographically smallest language code.
pub fn detect_language(
    text: &str,
    profiles: &[LanguageProfile],
) -> Result<(String, f64), NlpError> {
    if profiles.is_empty() {
        return Err(NlpError::NoProfiles);
    }
    let freqs = trigram_frequencies(text);
    if freqs.is_empty() {
        return Err(NlpError::EmptyText);
    }
    let mut scored: Vec<(&str, f64)> = profiles
        .iter()
        .map(|p| (p.lang.as_str(), cosine_sparse(&freqs, &p.ngrams)))
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("cosine is finite")
            .then_with(|| a.0.cmp(b.0))
    });
    let confidence = if scored.len() == 1 {
        1.0
    } else {
        scored[0].1 - scored[1].1
    };
    Ok((scored[0].0.to_string(), confidence))
}
