#![allow(dead_code)]

use std::path::PathBuf;

use manualbridge_core::index::build_index;
use manualbridge_core::ingest::{chunk_pages, compute_checksum, extract_pages, ChunkingConfig, DocumentFormat};
use manualbridge_core::{HashingEmbedder, IndexedManual};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn fixture_bytes(name: &str) -> Vec<u8> {
    std::fs::read(fixture(name)).unwrap()
}

/// The seeded 20-page manual, chunked and indexed with the defaults.
pub fn fixture_manual() -> IndexedManual {
    let bytes = fixture_bytes("manual.txt");
    let manual_id = compute_checksum(&bytes)[..16].to_string();
    let pages = extract_pages(&bytes, DocumentFormat::Txt).unwrap();
    let chunks = chunk_pages(&manual_id, &pages, &ChunkingConfig::default()).unwrap();
    let index = build_index(&chunks, &HashingEmbedder::default()).unwrap();
    IndexedManual { chunks, index }
}

#[derive(serde::Deserialize)]
pub struct Fact {
    pub fact: String,
    pub query_en: String,
    pub query_pcm: String,
}

pub fn facts() -> Vec<Fact> {
    serde_json::from_slice(&fixture_bytes("facts.json")).unwrap()
}
