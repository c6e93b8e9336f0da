//! The attribute-value document envelope shared by every service.
//!
//! An envelope is a tree of attribute-value pairs and arrays. Services read
//! the fields they declare in `requires` and write the fields they declare in
//! `provides`; everything else is carried through untouched. The canonical
//! encoding (sorted keys, no insignificant whitespace, UTF-8) makes byte
//! identity meaningful for cache keys and replica comparison.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Media type assumed when a document does not declare one.
pub const DEFAULT_MEDIA_TYPE: &str = "text/plain";

/// The reduced part-of-speech tag set used by the lemmatizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[allow(clippy::upper_case_acronyms)]
pub enum PosTag {
    NOUN,
    VERB,
    ADJ,
    ADV,
    PRON,
    NUM,
    PART,
    OTHER,
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "NOUN" => Ok(PosTag::NOUN),
            "VERB" => Ok(PosTag::VERB),
            "ADJ" => Ok(PosTag::ADJ),
            "ADV" => Ok(PosTag::ADV),
            "PRON" => Ok(PosTag::PRON),
            "NUM" => Ok(PosTag::NUM),
            "PART" => Ok(PosTag::PART),
            "OTHER" => Ok(PosTag::OTHER),
            other => Err(format!("unknown pos tag: {other}")),
        }
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PosTag::NOUN => "NOUN",
            PosTag::VERB => "VERB",
            PosTag::ADJ => "ADJ",
            PosTag::ADV => "ADV",
            PosTag::PRON => "PRON",
            PosTag::NUM => "NUM",
            PosTag::PART => "PART",
            PosTag::OTHER => "OTHER",
        };
        f.write_str(s)
    }
}

/// One token produced by word segmentation, optionally annotated by the
/// lemmatizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lemma: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pos: Option<PosTag>,
}

impl Token {
    pub fn new(surface: impl Into<String>) -> Self {
        Token {
            surface: surface.into(),
            lemma: None,
            pos: None,
        }
    }

    /// The lemma if one was assigned, otherwise the lowercased surface form.
    pub fn lemma_or_surface(&self) -> String {
        match &self.lemma {
            Some(l) => l.clone(),
            None => self.surface.to_lowercase(),
        }
    }
}

/// One provenance record: which service touched the envelope, and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub service: String,
    pub version: String,
    /// RFC 3339 timestamp of the invocation.
    pub timestamp: String,
}

/// The document flowing through pipelines, accumulating fields and
/// provenance as services run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentEnvelope {
    pub id: String,
    pub media_type: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sentences: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<Token>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub terms: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub keywords: Option<Vec<(String, f64)>>,
    /// Base64 of a byte payload, e.g. a WIN-1251 re-encoding of `text`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoded: Option<String>,
    /// Open attribute-value map; unknown top-level keys land here on decode.
    pub attrs: BTreeMap<String, Value>,
    pub provenance: Vec<Provenance>,
}

impl DocumentEnvelope {
    /// An empty envelope with the given id and the default media type.
    pub fn new(id: impl Into<String>) -> Self {
        DocumentEnvelope {
            id: id.into(),
            media_type: DEFAULT_MEDIA_TYPE.to_string(),
            language: None,
            text: None,
            sentences: None,
            tokens: None,
            terms: None,
            summary: None,
            keywords: None,
            encoded: None,
            attrs: BTreeMap::new(),
            provenance: Vec::new(),
        }
    }

    /// Convenience constructor for the common plain-text entry point.
    pub fn from_text(id: impl Into<String>, text: impl Into<String>) -> Self {
        let mut env = Self::new(id);
        env.text = Some(text.into());
        env
    }

    /// Whether a named field is present and usable by a service.
    ///
    /// Well-known field names map to the typed fields; any other name is
    /// looked up in `attrs`. `id` and `media_type` are always present.
    pub fn has_field(&self, name: &str) -> bool {
        match name {
            "id" | "media_type" => true,
            "language" => self.language.is_some(),
            "text" => self.text.is_some(),
            "sentences" => self.sentences.is_some(),
            "tokens" => self.tokens.is_some(),
            "terms" => self.terms.is_some(),
            "summary" => self.summary.is_some(),
            "keywords" => self.keywords.is_some(),
            "encoded" => self.encoded.is_some(),
            "attrs" => true,
            "provenance" => true,
            other => self.attrs.contains_key(other),
        }
    }

    /// Equality that ignores provenance timestamps (but not the sequence of
    /// services recorded). Used wherever two executions of the same pipeline
    /// are compared.
    pub fn eq_ignoring_timestamps(&self, other: &Self) -> bool {
        if self.provenance.len() != other.provenance.len() {
            return false;
        }
        let strip = |env: &Self| {
            let mut e = env.clone();
            for p in &mut e.provenance {
                p.timestamp.clear();
            }
            e
        };
        strip(self) == strip(other)
    }
}

/// Envelope decoding failure, with the byte offset of the first error.
#[derive(Debug, Error, PartialEq)]
pub enum EnvelopeError {
    #[error("malformed envelope at byte {offset}: {detail}")]
    Malformed { offset: usize, detail: String },
}

impl EnvelopeError {
    pub fn code(&self) -> &'static str {
        "malformed_envelope"
    }
}

/// Canonical serialization: object keys sorted lexicographically, UTF-8,
/// no insignificant whitespace. Two value-equal envelopes encode to
/// identical bytes.
///
/// Valid envelopes (finite keyword scores) always encode.
pub fn encode_envelope(env: &DocumentEnvelope) -> Vec<u8> {
    let value = envelope_to_value(env);
    serde_json::to_vec(&value).expect("canonical value serializes")
}

/// The envelope as an attribute-value tree. Objects use sorted maps, so
/// serializing the returned value yields the canonical form.
pub fn envelope_to_value(env: &DocumentEnvelope) -> Value {
    serde_json::to_value(env).expect("envelope converts to attribute-value tree")
}

/// Parse an envelope from canonical or non-canonical bytes.
///
/// Unknown top-level keys are preserved under `attrs`. A missing
/// `media_type` defaults to `text/plain`.
pub fn decode_envelope(bytes: &[u8]) -> Result<DocumentEnvelope, EnvelopeError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| EnvelopeError::Malformed {
        offset: byte_offset(bytes, e.line(), e.column()),
        detail: e.to_string(),
    })?;
    envelope_from_value(value)
}

/// Parse an envelope from an already-decoded attribute-value tree.
pub fn envelope_from_value(value: Value) -> Result<DocumentEnvelope, EnvelopeError> {
    let Value::Object(mut map) = value else {
        return Err(EnvelopeError::Malformed {
            offset: 0,
            detail: "envelope must be an attribute-value object".to_string(),
        });
    };

    fn field<T: serde::de::DeserializeOwned>(
        map: &mut serde_json::Map<String, Value>,
        key: &str,
    ) -> Result<Option<T>, EnvelopeError> {
        match map.remove(key) {
            None | Some(Value::Null) => Ok(None),
            Some(v) => serde_json::from_value(v)
                .map(Some)
                .map_err(|e| EnvelopeError::Malformed {
                    offset: 0,
                    detail: format!("field {key}: {e}"),
                }),
        }
    }

    let id: Option<String> = field(&mut map, "id")?;
    let media_type: Option<String> = field(&mut map, "media_type")?;
    let language = field(&mut map, "language")?;
    let text = field(&mut map, "text")?;
    let sentences = field(&mut map, "sentences")?;
    let tokens = field(&mut map, "tokens")?;
    let terms = field(&mut map, "terms")?;
    let summary = field(&mut map, "summary")?;
    let keywords = field(&mut map, "keywords")?;
    let encoded = field(&mut map, "encoded")?;
    let mut attrs: BTreeMap<String, Value> = field(&mut map, "attrs")?.unwrap_or_default();
    let provenance: Option<Vec<Provenance>> = field(&mut map, "provenance")?;

    // Whatever is left is an unknown key: keep it, do not invent meaning.
    for (k, v) in map {
        attrs.entry(k).or_insert(v);
    }

    Ok(DocumentEnvelope {
        id: id.unwrap_or_default(),
        media_type: media_type.unwrap_or_else(|| DEFAULT_MEDIA_TYPE.to_string()),
        language,
        text,
        sentences,
        tokens,
        terms,
        summary,
        keywords,
        encoded,
        attrs,
        provenance: provenance.unwrap_or_default(),
    })
}

/// Translate serde's 1-based line/column into a byte offset into `bytes`.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let mut current_line = 1usize;
    let mut line_start = 0usize;
    for (i, b) in bytes.iter().enumerate() {
        if current_line == line {
            line_start = i;
            break;
        }
        if *b == b'\n' {
            current_line += 1;
            line_start = i + 1;
        }
    }
    (line_start + column.saturating_sub(1)).min(bytes.len())
}
