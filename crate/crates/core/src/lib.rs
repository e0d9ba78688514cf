//! Grounded question answering over device user manuals for speakers of
//! languages the manuals were not written in.
//!
//! Manuals are ingested once (text extraction, chunking, hashing embeddings),
//! questions are pivoted through English, answered from retrieved excerpts,
//! checked by guardrails and translated back with page citations.

pub mod config;
pub mod embed;
pub mod eval;
mod fsutil;
pub mod index;
pub mod ingest;
pub mod lang;
mod pdf;
pub mod providers;
pub mod qa;
pub mod store;

pub use embed::{Embedder, EmbeddingConfig, EmbeddingVector, HashingEmbedder};
pub use index::{build_index, RetrievalHit, VectorIndex};
pub use ingest::{chunk_pages, extract_pages, normalize_text, Chunk, ChunkingConfig, DocumentFormat, PageText};
pub use lang::{detect_language, round_trip_score, translate, LanguageRegistry, LanguageTag, Translator};
pub use providers::{ProbeStatus, ProviderError, ProviderMode, Providers};
pub use qa::{Answer, Decision, GuardrailVerdict, IndexedManual, QaEngine, RetrievalConfig};

pub use store::{ManualDocument, ManualStore, NewManual, Session};
