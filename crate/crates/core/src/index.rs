//! Full-text indexing and search over processed envelopes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envelope::DocumentEnvelope;
use crate::nlp::{lemmatize, tokenize, Lexicon, StopList};

/// One posting: a document and the term frequency of a lemma in it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Posting {
    pub doc: String,
    pub tf: u64,
}

/// A ranked search hit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub doc: String,
    pub score: f64,
}

/// Report returned by document indexing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexReport {
    pub doc_id: String,
    pub indexed: u64,
}

#[derive(Debug, Error, PartialEq)]
pub enum IndexError {
    #[error("envelope has no lemmatized tokens to index")]
    MissingLemmas,
    #[error("envelope has no document id")]
    MissingId,
    #[error("no query lemma survives stop filtering")]
    EmptyQuery,
}

impl IndexError {
    pub fn code(&self) -> &'static str {
        match self {
            IndexError::MissingLemmas => "missing_lemmas",
            IndexError::MissingId => "missing_id",
            IndexError::EmptyQuery => "empty_query",
        }
    }
}

/// Inverted index: lemma postings sorted by document id, plus per-document
/// non-stop lemma counts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct InvertedIndex {
    postings: BTreeMap<String, Vec<Posting>>,
    doc_lengths: BTreeMap<String, u64>,
}

impl InvertedIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn doc_count(&self) -> usize {
        self.doc_lengths.len()
    }

    pub fn contains_doc(&self, id: &str) -> bool {
        self.doc_lengths.contains_key(id)
    }

    pub fn postings_for(&self, lemma: &str) -> &[Posting] {
        self.postings.get(lemma).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Index `lemmas` for `id`, replacing any previous postings for that id.
    /// Returns the number of lemma occurrences indexed.
    pub fn upsert_document(&mut self, id: &str, lemmas: &[String]) -> u64 {
        if self.doc_lengths.contains_key(id) {
            self.remove_document(id);
        }
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for lemma in lemmas {
            *counts.entry(lemma.as_str()).or_insert(0) += 1;
        }
        let total: u64 = counts.values().sum();
        for (lemma, tf) in counts {
            let list = self.postings.entry(lemma.to_string()).or_default();
            let at = list
                .binary_search_by(|p| p.doc.as_str().cmp(id))
                .unwrap_err();
            list.insert(
                at,
                Posting {
                    doc: id.to_string(),
                    tf,
                },
            );
        }
        self.doc_lengths.insert(id.to_string(), total);
        total
    }

    pub fn remove_document(&mut self, id: &str) {
        if self.doc_lengths.remove(id).is_none() {
            return;
        }
        self.postings.retain(|_, list| {
            list.retain(|p| p.doc != id);
            !list.is_empty()
        });
    }

    /// Smoothed inverse document frequency:
    /// `ln((1 + doc_count) / (1 + df)) + 1`.
    pub fn idf(&self, lemma: &str) -> f64 {
        let df = self.postings.get(lemma).map(Vec::len).unwrap_or(0);
        ((1.0 + self.doc_count() as f64) / (1.0 + df as f64)).ln() + 1.0
    }

    /// Rank documents for the already-normalized query lemmas:
    /// `score(d) = sum over q of tf(q, d) * idf(q)`, descending score, ties
    /// by ascending document id. Zero-score documents are never returned.
    pub fn search_lemmas(&self, query: &[String], limit: usize) -> Vec<SearchHit> {
        let mut scores: BTreeMap<&str, f64> = BTreeMap::new();
        for lemma in query {
            let idf = self.idf(lemma);
            for posting in self.postings_for(lemma) {
                *scores.entry(posting.doc.as_str()).or_insert(0.0) += posting.tf as f64 * idf;
            }
        }
        let mut hits: Vec<SearchHit> = scores
            .into_iter()
            .filter(|(_, score)| *score > 0.0)
            .map(|(doc, score)| SearchHit {
                doc: doc.to_string(),
                score,
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("scores are finite")
                .then_with(|| a.doc.cmp(&b.doc))
        });
        hits.truncate(limit);
        hits
    }
}

/// Index an envelope's non-stop lemmas under its id, replacing any previous
/// version of the document.
pub fn index_envelope(
    index: &mut InvertedIndex,
    env: &DocumentEnvelope,
    stops: &StopList,
) -> Result<IndexReport, IndexError> {
    if env.id.is_empty() {
        return Err(IndexError::MissingId);
    }
    let tokens = env.tokens.as_ref().ok_or(IndexError::MissingLemmas)?;
    let lemmas: Vec<String> = tokens
        .iter()
        .map(|t| t.lemma_or_surface())
        .filter(|l| !stops.contains(&l.to_lowercase()))
        .collect();
    let indexed = index.upsert_document(&env.id, &lemmas);
    Ok(IndexReport {
        doc_id: env.id.clone(),
        indexed,
    })
}

/// Tokenize, lemmatize and stop-filter a query string into search lemmas.
pub fn query_lemmas(text: &str, lexicon: Option<&Lexicon>, stops: &StopList) -> Vec<String> {
    let tokens = tokenize(text);
    let tokens = match lexicon {
        Some(lex) => lemmatize(&tokens, lex),
        None => tokens,
    };
    tokens
        .iter()
        .map(|t| t.lemma_or_surface())
        .filter(|l| !stops.contains(&l.to_lowercase()))
        .collect()
}
