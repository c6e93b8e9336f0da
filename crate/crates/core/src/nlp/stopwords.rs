//! Stop-word filtering.

use std::collections::HashSet;
use std::path::Path;

use crate::envelope::Token;
use crate::nlp::ResourceError;

/// A set of lowercase word forms that carry no semantic load.
///
/// File format: UTF-8, one form per line, `#` starts a comment line.
#[derive(Debug, Clone, Default)]
pub struct StopList {
    words: HashSet<String>,
}

impl StopList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_words<I: IntoIterator<Item = S>, S: AsRef<str>>(words: I) -> Self {
        let mut list = StopList::new();
        for w in words {
            list.insert(w.as_ref());
        }
        list
    }

    pub fn insert(&mut self, word: &str) {
        let w = word.trim().to_lowercase();
        if !w.is_empty() {
            self.words.insert(w);
        }
    }

    pub fn contains(&self, word_lower: &str) -> bool {
        self.words.contains(word_lower)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn from_str_content(content: &str) -> Self {
        let mut list = StopList::new();
        for line in content.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            list.insert(line);
        }
        list
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ResourceError> {
        let path = path.as_ref();
        let content = std::fs::read_to_string(path).map_err(|source| ResourceError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Ok(Self::from_str_content(&content))
    }
}

/// Keep the tokens whose lowercased lemma (or surface, when no lemma is set)
/// is not in the stop list. Relative order is preserved.
pub fn filter_tokens(tokens: &[Token], stops: &StopList) -> Vec<Token> {
    tokens
        .iter()
        .filter(|t| !stops.contains(&t.lemma_or_surface()))
        .cloned()
        .collect()
}

/// Keep the terms whose lowercased form is not in the stop list.
pub fn filter_terms(terms: &[String], stops: &StopList) -> Vec<String> {
    terms
        .iter()
        .filter(|t| !stops.contains(&t.to_lowercase()))
        .cloned()
        .collect()
}
