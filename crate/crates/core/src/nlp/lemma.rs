//! Dictionary lemmatization with part-of-speech tagging.

use std::collections::HashMap;
use std::path::Path;
use std::str::FromStr;

use crate::envelope::{PosTag, Token};
use crate::nlp::ResourceError;

/// Lowercase surface form to (lemma, pos) lookup table, loaded from a TSV
/// file `surface<TAB>lemma<TAB>pos`.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, (String, PosTag)>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, surface: &str, lemma: &str, pos: PosTag) {
        self.entries
            .insert(surface.to_lowercase(), (lemma.to_string(), pos));
    }

    pub fn get(&self, surface_lower: &str) -> Option<&(String, PosTag)> {
        self.entries.get(surface_lower)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_tsv_str(content: &str, path: &str) -> Result<Self, ResourceError> {
        let mut lexicon = Lexicon::new();
        for (lineno, line) in content.lines().enumerate() {
            let line_trim = line.trim_end_matches('\r');
            if line_trim.trim().is_empty() {
                continue;
            }
            let mut parts = line_trim.split('\t');
            let (surface, lemma, pos) = match (parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(l), Some(p)) => (s.trim(), l.trim(), p.trim()),
                _ => {
                    return Err(ResourceError::malformed(
                        path,
                        lineno + 1,
                        "expected surface<TAB>lemma<TAB>pos",
                    ))
                }
            };
            if surface.is_empty() || lemma.is_empty() {
                return Err(ResourceError::malformed(
                    path,
                    lineno + 1,
                    "surface and lemma must be non-empty",
                ));
            }
            let tag = PosTag::from_str(pos)
                .map_err(|e| ResourceError::malformed(path, lineno + 1, e))?;
            lexicon.insert(surface, lemma, tag);
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
        Self::from_tsv_str(&content, &display)
    }
}

/// Fill lemma and pos on each token by lowercase lexicon lookup. Unknown
/// surfaces fall back to the lowercased surface with the OTHER tag. Token
/// order and count are unchanged.
pub fn lemmatize(tokens: &[Token], lexicon: &Lexicon) -> Vec<Token> {
    tokens
        .iter()
        .map(|t| {
            let key = t.surface.to_lowercase();
            let mut out = t.clone();
            match lexicon.get(&key) {
                Some((lemma, pos)) => {
                    out.lemma = Some(lemma.clone());
                    out.pos = Some(*pos);
                }
                None => {
                    out.lemma = Some(key);
                    out.pos = Some(PosTag::OTHER);
                }
            }
            out
        })
        .collect()
}
