//! A composite-web-service coordination kernel.
//!
//! The kernel holds three things: a registry of atomic services, a catalog
//! of validated compositions over them, and a coordinator that executes a
//! composition as an ordered sequence of service invocations on a flowing
//! attribute-value envelope. A desk-scale suite of builtin text-processing
//! services (language identification, sentence/word segmentation,
//! lemmatization, term segmentation, stop-word filtering, summarization,
//! keyword extraction, WIN-1251 re-encoding, full-text indexing) ships
//! in-process behind the same envelope contract remote services use, so the
//! coordinator path is identical for both.
//!
//! Supporting modules provide full-text search over processed envelopes,
//! queries over a pre-built word-vector model, and a document store with
//! snapshot-based last-writer-wins replica synchronization.

pub mod cli;
pub mod composition;
pub mod config;
pub mod coordinator;
pub mod envelope;
pub mod http;
pub mod index;
pub mod kernel;
pub mod nlp;
pub mod registry;
pub mod store;
pub mod transport;
pub mod vectors;

pub use composition::{CompositionDef, CompositionStore, ExecutionPlan, StageDef};
pub use coordinator::{Coordinator, ExecutionTrace, RunOutput};
pub use envelope::{decode_envelope, encode_envelope, DocumentEnvelope, Token};
pub use kernel::{Kernel, KernelBuilder, Resources};
pub use registry::{ServiceDescriptor, ServiceKind, ServiceRegistry};
pub use store::{Store, StoredDocument, SyncBundle};
pub use vectors::VectorModel;
