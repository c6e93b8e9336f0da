//! Reference suite of builtin atomic text-processing services.
//!
//! Every operation here is a deterministic pure function of its inputs and
//! the immutable language resources (profiles, lexicons, stop lists) loaded
//! at startup. Resources are plain data files, so the suite is
//! language-agnostic; fixtures ship for English and Ukrainian.

pub mod keywords;
pub mod langid;
pub mod lemma;
pub mod sentence;
pub mod stopwords;
pub mod summary;
pub mod terms;
pub mod token;
pub mod win1251;

pub use keywords::extract_keywords;
pub use langid::{detect_language, train_profile, trigram_frequencies, LanguageProfile};
pub use lemma::{lemmatize, Lexicon};
pub use sentence::split_sentences;
pub use stopwords::{filter_terms, filter_tokens, StopList};
pub use summary::summarize;
pub use terms::{segment_terms, TermLexicon};
pub use token::tokenize;
pub use win1251::{from_win1251, to_win1251, ConversionMode};

use thiserror::Error;

/// Failures of the text-processing operations.
#[derive(Debug, Error, PartialEq)]
pub enum NlpError {
    #[error("corpus too small: {letters} letters, need at least {min}")]
    CorpusTooSmall { letters: usize, min: usize },
    #[error("no language profiles loaded")]
    NoProfiles,
    #[error("text contains no letters")]
    EmptyText,
    #[error("no lexicon configured")]
    LexiconMissing,
    #[error("no stop list configured")]
    StopListMissing,
    #[error("code point U+{codepoint:04X} at offset {offset} has no WIN-1251 mapping")]
    Unmappable { codepoint: u32, offset: usize },
}

impl NlpError {
    /// Stable machine-readable code, used on the wire as `{code, message}`.
    pub fn code(&self) -> &'static str {
        match self {
            NlpError::CorpusTooSmall { .. } => "corpus_too_small",
            NlpError::NoProfiles => "no_profiles",
            NlpError::EmptyText => "empty_text",
            NlpError::LexiconMissing => "lexicon_missing",
            NlpError::StopListMissing => "stoplist_missing",
            NlpError::Unmappable { .. } => "unmappable",
        }
    }
}

/// Failure loading a language resource file.
#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {reason}")]
    Malformed {
        path: String,
        line: usize,
        reason: String,
    },
}

impl ResourceError {
    pub fn malformed(path: &str, line: usize, reason: impl Into<String>) -> Self {
        ResourceError::Malformed {
            path: path.to_string(),
            line,
            reason: reason.into(),
        }
    }
}
