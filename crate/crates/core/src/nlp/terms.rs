//! Term segmentation: dividing a token stream into multiple-word and
//! one-word terms by greedy longest match against a term lexicon.

use std::collections::HashSet;
use std::path::Path;

use crate::envelope::Token;
use crate::nlp::ResourceError;

/// Multiword terms stored as lemmatized token sequences of length >= 2.
///
/// File format: UTF-8, one space-joined lemma sequence per line.
#[derive(Debug, Clone, Default)]
pub struct TermLexicon {
    sequences: HashSet<Vec<String>>,
    max_len: usize,
}

impl TermLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one lemma sequence. Sequences shorter than two tokens are
    /// rejected: single-word terms arise from unmatched tokens instead.
    pub fn insert(&mut self, lemmas: &[&str]) -> Result<(), String> {
        if lemmas.len() < 2 {
            return Err(format!(
                "term must have at least 2 tokens, got {}",
                lemmas.len()
            ));
        }
        let seq: Vec<String> = lemmas.iter().map(|l| l.to_lowercase()).collect();
        self.max_len = self.max_len.max(seq.len());
        self.sequences.insert(seq);
        Ok(())
    }

    pub fn contains(&self, seq: &[String]) -> bool {
        self.sequences.contains(seq)
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn from_str_content(content: &str, path: &str) -> Result<Self, ResourceError> {
        let mut lexicon = TermLexicon::new();
        for (lineno, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            lexicon
                .insert(&parts)
                .map_err(|e| ResourceError::malformed(path, lineno + 1, e))?;
        }
        Ok(lexicon)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ResourceError> {
        let path = path.as_ref();
        let display = path.display().to_string();
        let content = std::fs::read_to_string(path).map_err(|source| ResourceError::Io {
            path: display.clone(),
            source,
        })?;
        Self::from_str_content(&content, &display)
    }
}

/// Greedy left-to-right longest-match segmentation over lemma sequences.
///
/// Matched spans emit the multiword term (space-joined lemmas); unmatched
/// tokens emit their lemma as a one-word term. Every token belongs to
/// exactly one term.
pub fn segment_terms(tokens: &[Token], lexicon: &TermLexicon) -> Vec<String> {
    let lemmas: Vec<String> = tokens.iter().map(|t| t.lemma_or_surface()).collect();
    let mut terms = Vec::new();
    let mut i = 0usize;
    while i < lemmas.len() {
        let longest = lexicon.max_len.min(lemmas.len() - i);
        let mut matched = 0usize;
        if longest >= 2 {
            for len in (2..=longest).rev() {
                if lexicon.contains(&lemmas[i..i + len]) {
                    matched = len;
                    break;
                }
            }
        }
        if matched > 0 {
            terms.push(lemmas[i..i + matched].join(" "));
            i += matched;
        } else {
            terms.push(lemmas[i].clone());
            i += 1;
        }
    }
    terms
}
