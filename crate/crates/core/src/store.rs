//! File-per-record persistence for manuals and session transcripts.
//!
//! ```text
//! <root>/manuals/<manual_id>/blob          original upload bytes
//! <root>/manuals/<manual_id>/meta.json     ManualDocument
//! <root>/manuals/<manual_id>/chunks.jsonl  one Chunk per line, ordinal order
//! <root>/manuals/<manual_id>/index.mbix    VectorIndex
//! <root>/sessions/<session_id>.jsonl       header line, then one Exchange per line
//! ```
//!
//! A manual directory is assembled under a temporary name and renamed into
//! place, so readers see either the complete manual or nothing.

use std::collections::HashMap;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::Embedder;
use crate::fsutil::atomic_write;
use crate::index::{build_index, IndexError, VectorIndex};
use crate::ingest::{
    chunk_pages, compute_checksum, extract_pages, Chunk, ChunkingConfig, DocumentFormat,
    IngestError,
};
use crate::lang::{LangError, LanguageRegistry, LanguageTag};
use crate::qa::{Answer, IndexedManual};

const MANUAL_ID_LEN: usize = 16;
const SESSION_ID_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{kind} {id} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("unknown language {0:?}")]
    UnknownLanguage(String),
    #[error("manual {0} has no usable index")]
    ManualNotIndexed(String),
    #[error("manual id {id} is already taken by a different document")]
    ChecksumConflict { id: String },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("storage is full")]
    StorageFull,
    #[error("corrupt record {path}: {reason}")]
    Corrupt { path: String, reason: String },
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("store i/o: {0}")]
    Io(io::Error),
}

impl From<io::Error> for StoreError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::StorageFull {
            Self::StorageFull
        } else {
            Self::Io(e)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManualDocument {
    pub manual_id: String,
    pub title: String,
    pub source_filename: String,
    pub source_language: LanguageTag,
    pub checksum: String,
    pub page_count: usize,
    pub chunk_count: usize,
    pub ingested_at: DateTime<Utc>,
}

/// Result of [`ManualStore::register_manual`]; `created` is false when the
/// bytes were already registered.
#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    pub manual: ManualDocument,
    pub created: bool,
}

#[derive(Debug, Clone, Default)]
pub struct NewManual<'a> {
    pub bytes: &'a [u8],
    pub title: Option<String>,
    pub filename: Option<String>,
    /// Detected from `filename`, then content, when absent.
    pub format: Option<DocumentFormat>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SessionHeader {
    session_id: String,
    manual_id: String,
    user_language: LanguageTag,
    created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub question_text: String,
    pub answer: Answer,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub manual_id: String,
    pub user_language: LanguageTag,
    pub created_at: DateTime<Utc>,
    pub exchanges: Vec<Exchange>,
}

#[derive(Debug)]
pub struct ManualStore {
    root: PathBuf,
    chunking: ChunkingConfig,
    indexed: RwLock<HashMap<String, Arc<IndexedManual>>>,
    session_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl ManualStore {
    /// Open (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("manuals"))?;
        fs::create_dir_all(root.join("sessions"))?;
        Ok(Self {
            root,
            chunking: ChunkingConfig::default(),
            indexed: RwLock::new(HashMap::new()),
            session_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_chunking(mut self, chunking: ChunkingConfig) -> Result<Self, StoreError> {
        chunking.validate()?;
        self.chunking = chunking;
        Ok(self)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn chunking(&self) -> &ChunkingConfig {
        &self.chunking
    }

    fn manual_dir(&self, manual_id: &str) -> PathBuf {
        self.root.join("manuals").join(manual_id)
    }

    fn session_path(&self, session_id: &str) -> PathBuf {
        self.root.join("sessions").join(format!("{session_id}.jsonl"))
    }

    /// Ingest, chunk and index `upload`, then persist it. Re-registering the
    /// same bytes returns the stored record untouched.
    pub fn register_manual(
        &self,
        upload: &NewManual<'_>,
        embedder: &dyn Embedder,
    ) -> Result<Registration, StoreError> {
        if upload.bytes.is_empty() {
            return Err(IngestError::EmptyDocument.into());
        }
        let checksum = compute_checksum(upload.bytes);
        let manual_id = manual_id_for(&checksum);
        if let Some(existing) = self.existing(&manual_id, &checksum)? {
            return Ok(Registration {
                manual: existing,
                created: false,
            });
        }

        let format = match upload.format {
            Some(f) => f,
            None => DocumentFormat::detect(upload.filename.as_deref(), upload.bytes)?,
        };
        let pages = extract_pages(upload.bytes, format)?;
        let chunks = chunk_pages(&manual_id, &pages, &self.chunking)?;
        let index = build_index(&chunks, embedder)?;

        let source_filename = upload
            .filename
            .clone()
            .unwrap_or_else(|| format!("{manual_id}.{format}"));
        let title = upload
            .title
            .clone()
            .filter(|t| !t.trim().is_empty())
            .unwrap_or_else(|| default_title(&source_filename));
        let doc = ManualDocument {
            manual_id: manual_id.clone(),
            title,
            source_filename,
            source_language: LanguageTag::pivot(),
            checksum: checksum.clone(),
            page_count: pages.len(),
            chunk_count: chunks.len(),
            ingested_at: Utc::now(),
        };

        let staging = self
            .root
            .join("manuals")
            .join(format!(".staging-{manual_id}-{:016x}", rand::random::<u64>()));
        let result = (|| -> Result<(), StoreError> {
            fs::create_dir(&staging)?;
            write_synced(&staging.join("blob"), upload.bytes)?;
            write_synced(&staging.join("chunks.jsonl"), &chunks_jsonl(&chunks))?;
            write_synced(&staging.join("index.mbix"), &index.to_bytes())?;
            write_synced(&staging.join("meta.json"), &to_json_bytes(&doc))?;
            fs::File::open(&staging)?.sync_all()?;
            Ok(())
        })();
        if let Err(e) = result {
            let _ = fs::remove_dir_all(&staging);
            return Err(e);
        }
        match fs::rename(&staging, self.manual_dir(&manual_id)) {
            Ok(()) => {
                sync_dir(&self.root.join("manuals"));
                self.indexed.write().unwrap().insert(
                    manual_id,
                    Arc::new(IndexedManual { chunks, index }),
                );
                Ok(Registration {
                    manual: doc,
                    created: true,
                })
            }
            Err(e) => {
                let _ = fs::remove_dir_all(&staging);
                // lost a race with a concurrent registration of the same bytes
                match self.existing(&manual_id, &checksum)? {
                    Some(existing) => Ok(Registration {
                        manual: existing,
                        created: false,
                    }),
                    None => Err(e.into()),
                }
            }
        }
    }

    fn existing(&self, manual_id: &str, checksum: &str) -> Result<Option<ManualDocument>, StoreError> {
        match self.get_manual(manual_id) {
            Ok(doc) if doc.checksum == checksum => Ok(Some(doc)),
            Ok(_) => Err(StoreError::ChecksumConflict {
                id: manual_id.to_string(),
            }),
            Err(StoreError::NotFound { .. }) => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn get_manual(&self, manual_id: &str) -> Result<ManualDocument, StoreError> {
        if !is_hex_id(manual_id, MANUAL_ID_LEN) {
            return Err(not_found("manual", manual_id));
        }
        let path = self.manual_dir(manual_id).join("meta.json");
        match fs::read(&path) {
            Ok(bytes) => parse_json(&path, &bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(not_found("manual", manual_id)),
            Err(e) => Err(e.into()),
        }
    }

    /// Newest first, ties by manual id; returns the total alongside the page.
    pub fn list_manuals(
        &self,
        offset: usize,
        limit: usize,
    ) -> Result<(usize, Vec<ManualDocument>), StoreError> {
        if limit == 0 {
            return Err(StoreError::InvalidArgument("limit must be at least 1".into()));
        }
        let mut all = Vec::new();
        for entry in fs::read_dir(self.root.join("manuals"))? {
            let name = entry?.file_name();
            let Some(id) = name.to_str() else { continue };
            if !is_hex_id(id, MANUAL_ID_LEN) {
                continue;
            }
            match self.get_manual(id) {
                Ok(doc) => all.push(doc),
                Err(StoreError::NotFound { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        all.sort_by(|a, b| {
            b.ingested_at
                .cmp(&a.ingested_at)
                .then_with(|| a.manual_id.cmp(&b.manual_id))
        });
        let total = all.len();
        let page = all.into_iter().skip(offset).take(limit).collect();
        Ok((total, page))
    }

    pub fn load_chunks(&self, manual_id: &str) -> Result<Vec<Chunk>, StoreError> {
        self.get_manual(manual_id)?;
        let path = self.manual_dir(manual_id).join("chunks.jsonl");
        let file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(StoreError::ManualNotIndexed(manual_id.to_string()))
            }
            Err(e) => return Err(e.into()),
        };
        let mut chunks = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line?;
            if !line.trim().is_empty() {
                chunks.push(parse_json(&path, line.as_bytes())?);
            }
        }
        Ok(chunks)
    }

    pub fn load_index(&self, manual_id: &str) -> Result<VectorIndex, StoreError> {
        self.get_manual(manual_id)?;
        let path = self.manual_dir(manual_id).join("index.mbix");
        match VectorIndex::load(&path, manual_id) {
            Ok(index) => Ok(index),
            Err(IndexError::Io(e)) if e.kind() == io::ErrorKind::NotFound => {
                Err(StoreError::ManualNotIndexed(manual_id.to_string()))
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Chunks plus index, cached in memory after the first load; manuals never change.
    pub fn indexed_manual(&self, manual_id: &str) -> Result<Arc<IndexedManual>, StoreError> {
        if let Some(hit) = self.indexed.read().unwrap().get(manual_id) {
            return Ok(hit.clone());
        }
        let chunks = self.load_chunks(manual_id)?;
        let index = self.load_index(manual_id)?;
        if chunks.len() != index.len() {
            return Err(StoreError::ManualNotIndexed(manual_id.to_string()));
        }
        let loaded = Arc::new(IndexedManual { chunks, index });
        self.indexed
            .write()
            .unwrap()
            .insert(manual_id.to_string(), loaded.clone());
        Ok(loaded)
    }

    pub fn create_session(
        &self,
        manual_id: &str,
        language: &str,
        registry: &LanguageRegistry,
    ) -> Result<Session, StoreError> {
        let user_language = registry.tag(language).map_err(|e| match e {
            LangError::UnknownLanguage(code) => StoreError::UnknownLanguage(code),
            other => StoreError::InvalidArgument(other.to_string()),
        })?;
        self.get_manual(manual_id)?;
        let header = SessionHeader {
            session_id: format!("{:032x}", rand::random::<u128>()),
            manual_id: manual_id.to_string(),
            user_language,
            created_at: Utc::now(),
        };
        let mut line = to_json_bytes(&header);
        line.push(b'\n');
        atomic_write(&self.session_path(&header.session_id), &line)?;
        Ok(Session {
            session_id: header.session_id,
            manual_id: header.manual_id,
            user_language: header.user_language,
            created_at: header.created_at,
            exchanges: Vec::new(),
        })
    }

    fn session_lock(&self, session_id: &str) -> Arc<Mutex<()>> {
        self.session_locks
            .lock()
            .unwrap()
            .entry(session_id.to_string())
            .or_default()
            .clone()
    }

    /// Appends are serialized per session; the file is rewritten atomically.
    pub fn append_exchange(
        &self,
        session_id: &str,
        question: &str,
        answer: &Answer,
    ) -> Result<Exchange, StoreError> {
        if !is_hex_id(session_id, SESSION_ID_LEN) {
            return Err(not_found("session", session_id));
        }
        let lock = self.session_lock(session_id);
        let _guard = lock.lock().unwrap();
        let path = self.session_path(session_id);
        let mut bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(not_found("session", session_id))
            }
            Err(e) => return Err(e.into()),
        };
        let exchange = Exchange {
            question_text: question.to_string(),
            answer: answer.clone(),
            at: Utc::now(),
        };
        if !bytes.is_empty() && !bytes.ends_with(b"\n") {
            bytes.push(b'\n');
        }
        bytes.extend(to_json_bytes(&exchange));
        bytes.push(b'\n');
        atomic_write(&path, &bytes)?;
        Ok(exchange)
    }

    pub fn load_session(&self, session_id: &str) -> Result<Session, StoreError> {
        if !is_hex_id(session_id, SESSION_ID_LEN) {
            return Err(not_found("session", session_id));
        }
        let path = self.session_path(session_id);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => {
                return Err(not_found("session", session_id))
            }
            Err(e) => return Err(e.into()),
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header: SessionHeader = match lines.next() {
            Some(line) => parse_json(&path, line.as_bytes())?,
            None => {
                return Err(StoreError::Corrupt {
                    path: path.display().to_string(),
                    reason: "missing session header".into(),
                })
            }
        };
        let exchanges = lines
            .map(|line| parse_json(&path, line.as_bytes()))
            .collect::<Result<Vec<Exchange>, _>>()?;
        Ok(Session {
            session_id: header.session_id,
            manual_id: header.manual_id,
            user_language: header.user_language,
            created_at: header.created_at,
            exchanges,
        })
    }
}

fn default_title(filename: &str) -> String {
    let base = filename.rsplit(['/', '\\']).next().unwrap_or(filename);
    match base.rsplit_once('.') {
        Some((stem, _)) if !stem.is_empty() => stem.to_string(),
        _ => base.to_string(),
    }
}

fn not_found(kind: &'static str, id: &str) -> StoreError {
    StoreError::NotFound {
        kind,
        id: id.to_string(),
    }
}

fn is_hex_id(id: &str, len: usize) -> bool {
    id.len() == len && id.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f'))
}

/// Manual ids are the leading hex digits of the content checksum.
pub fn manual_id_for(checksum: &str) -> String {
    checksum[..MANUAL_ID_LEN].to_string()
}

/// Chunks as JSON Lines, one object per line in ordinal order.
pub fn chunks_jsonl(chunks: &[Chunk]) -> Vec<u8> {
    let mut out = Vec::new();
    for chunk in chunks {
        serde_json::to_writer(&mut out, chunk).expect("chunk serializes");
        out.push(b'\n');
    }
    out
}

fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    serde_json::to_vec(value).expect("record serializes")
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, bytes: &[u8]) -> Result<T, StoreError> {
    serde_json::from_slice(bytes).map_err(|e| StoreError::Corrupt {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

fn sync_dir(dir: &Path) {
    if let Ok(d) = fs::File::open(dir) {
        let _ = d.sync_all();
    }
}
