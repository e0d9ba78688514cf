//! Manual ingestion: byte extraction, text normalization and token-window chunking.
//!
//! Everything here is a pure function of its inputs. The chunk list for a given
//! byte sequence and [`ChunkingConfig`] is reproducible across runs and platforms,
//! which the store relies on for content addressing.

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("unsupported document format: {0}")]
    UnsupportedFormat(String),
    #[error("document is password protected")]
    EncryptedDocument,
    #[error("document has no extractable text layer")]
    NoExtractableText,
    #[error("document is empty after normalization")]
    EmptyDocument,
    #[error("invalid chunking config: {0}")]
    InvalidConfig(String),
}

/// Declared input format of an uploaded manual.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocumentFormat {
    Pdf,
    Txt,
}

impl DocumentFormat {
    /// Format from a file name extension, case-insensitive.
    pub fn from_filename(name: &str) -> Option<Self> {
        let ext = name.rsplit_once('.')?.1.to_ascii_lowercase();
        match ext.as_str() {
            "pdf" => Some(Self::Pdf),
            "txt" | "text" => Some(Self::Txt),
            _ => None,
        }
    }

    /// Content sniffing fallback: `%PDF-` magic, otherwise valid UTF-8 is text.
    pub fn sniff(bytes: &[u8]) -> Option<Self> {
        if bytes.starts_with(b"%PDF-") {
            Some(Self::Pdf)
        } else if std::str::from_utf8(bytes).is_ok() {
            Some(Self::Txt)
        } else {
            None
        }
    }

    /// Extension first, then content. An unknown extension is an error, not a sniff.
    pub fn detect(filename: Option<&str>, bytes: &[u8]) -> Result<Self, IngestError> {
        match filename {
            Some(name) if name.contains('.') => Self::from_filename(name)
                .ok_or_else(|| IngestError::UnsupportedFormat(name.to_string())),
            _ => Self::sniff(bytes)
                .ok_or_else(|| IngestError::UnsupportedFormat("unrecognised content".into())),
        }
    }
}

impl fmt::Display for DocumentFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Pdf => "pdf",
            Self::Txt => "txt",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageText {
    pub page_no: u32,
    pub text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkingConfig {
    pub chunk_size_tokens: usize,
    pub overlap_tokens: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            chunk_size_tokens: 64,
            overlap_tokens: 8,
        }
    }
}

impl ChunkingConfig {
    pub fn new(chunk_size_tokens: usize, overlap_tokens: usize) -> Result<Self, IngestError> {
        let cfg = Self {
            chunk_size_tokens,
            overlap_tokens,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.overlap_tokens >= self.chunk_size_tokens {
            return Err(IngestError::InvalidConfig(format!(
                "overlap {} must be smaller than chunk size {}",
                self.overlap_tokens, self.chunk_size_tokens
            )));
        }
        Ok(())
    }

    pub fn stride(&self) -> usize {
        self.chunk_size_tokens - self.overlap_tokens
    }
}

/// A contiguous token window of a manual.
///
/// `char_start`/`char_end` count Unicode scalar values in the page-concatenated
/// text (pages joined with `\n`), so they index the same way in any language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub chunk_id: String,
    pub manual_id: String,
    pub ordinal: usize,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
    pub page_first: u32,
    pub page_last: u32,
    pub token_count: usize,
}

/// Extract normalized, non-empty pages from raw manual bytes.
pub fn extract_pages(bytes: &[u8], format: DocumentFormat) -> Result<Vec<PageText>, IngestError> {
    if bytes.is_empty() {
        return Err(IngestError::NoExtractableText);
    }
    let raw_pages = match format {
        DocumentFormat::Txt => txt_pages(bytes)?,
        DocumentFormat::Pdf => crate::pdf::pdf_pages(bytes)?,
    };
    let pages: Vec<PageText> = raw_pages
        .into_iter()
        .enumerate()
        .filter_map(|(i, raw)| {
            let text = normalize_text(&raw);
            (!text.is_empty()).then(|| PageText {
                page_no: i as u32 + 1,
                text,
            })
        })
        .collect();
    if pages.is_empty() {
        return Err(IngestError::NoExtractableText);
    }
    Ok(pages)
}

fn txt_pages(bytes: &[u8]) -> Result<Vec<String>, IngestError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|_| IngestError::UnsupportedFormat("text file is not valid UTF-8".into()))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    Ok(text.split('\u{000c}').map(str::to_owned).collect())
}

/// NFC, control characters dropped, whitespace runs collapsed to one space,
/// line breaks collapsed to one `\n`, ends trimmed.
pub fn normalize_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    let mut pending_newline = false;
    for c in raw.chars() {
        if c == '\n' || c == '\r' {
            pending_newline = true;
        } else if c.is_whitespace() {
            pending_space = true;
        } else if c.is_control() {
            continue;
        } else {
            if !out.is_empty() {
                if pending_newline {
                    out.push('\n');
                } else if pending_space {
                    out.push(' ');
                }
            }
            pending_space = false;
            pending_newline = false;
            out.push(c);
        }
    }
    out.nfc().collect()
}

/// Number of maximal non-whitespace runs.
pub fn estimate_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Lowercase hex SHA-256.
pub fn compute_checksum(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn chunk_id(manual_id: &str, ordinal: usize) -> String {
    let digest = Sha256::digest(format!("{manual_id}:{ordinal}").as_bytes());
    hex::encode(&digest[..8])
}

#[derive(Debug, Clone, Copy)]
struct TokenSpan {
    char_start: usize,
    char_end: usize,
    byte_start: usize,
    byte_end: usize,
    page_no: u32,
}

fn token_spans(pages: &[PageText]) -> (String, Vec<TokenSpan>) {
    let mut text = String::new();
    let mut spans = Vec::new();
    let mut char_pos = 0usize;
    for (i, page) in pages.iter().enumerate() {
        if i > 0 {
            text.push('\n');
            char_pos += 1;
        }
        let mut open: Option<(usize, usize)> = None;
        for c in page.text.chars() {
            let byte_pos = text.len();
            if c.is_whitespace() {
                if let Some((cs, bs)) = open.take() {
                    spans.push(TokenSpan {
                        char_start: cs,
                        char_end: char_pos,
                        byte_start: bs,
                        byte_end: byte_pos,
                        page_no: page.page_no,
                    });
                }
            } else if open.is_none() {
                open = Some((char_pos, byte_pos));
            }
            text.push(c);
            char_pos += 1;
        }
        if let Some((cs, bs)) = open {
            spans.push(TokenSpan {
                char_start: cs,
                char_end: char_pos,
                byte_start: bs,
                byte_end: text.len(),
                page_no: page.page_no,
            });
        }
    }
    (text, spans)
}

/// Token index ranges `[start, end)` of the sliding windows over `n_tokens`.
///
/// A trailing window is produced only when it reaches a token the previous
/// window did not cover.
pub fn window_ranges(n_tokens: usize, cfg: &ChunkingConfig) -> Vec<(usize, usize)> {
    let mut ranges = Vec::new();
    if n_tokens == 0 {
        return ranges;
    }
    let mut start = 0;
    loop {
        let end = (start + cfg.chunk_size_tokens).min(n_tokens);
        ranges.push((start, end));
        if end >= n_tokens {
            break;
        }
        start += cfg.stride();
    }
    ranges
}

/// Split pages into overlapping token windows.
///
/// Pages are joined with a single newline first, so a chunk may straddle a page
/// boundary; `page_first`/`page_last` record the pages its tokens came from.
pub fn chunk_pages(
    manual_id: &str,
    pages: &[PageText],
    cfg: &ChunkingConfig,
) -> Result<Vec<Chunk>, IngestError> {
    cfg.validate()?;
    let (text, spans) = token_spans(pages);
    if spans.is_empty() {
        return Err(IngestError::EmptyDocument);
    }
    let chunks = window_ranges(spans.len(), cfg)
        .into_iter()
        .enumerate()
        .map(|(ordinal, (start, end))| {
            let first = spans[start];
            let last = spans[end - 1];
            Chunk {
                chunk_id: chunk_id(manual_id, ordinal),
                manual_id: manual_id.to_string(),
                ordinal,
                text: text[first.byte_start..last.byte_end].to_string(),
                char_start: first.char_start,
                char_end: last.char_end,
                page_first: first.page_no,
                page_last: last.page_no,
                token_count: end - start,
            }
        })
        .collect();
    Ok(chunks)
}

/// The page-concatenated text that chunk offsets index into.
pub fn concatenated_text(pages: &[PageText]) -> String {
    pages
        .iter()
        .map(|p| p.text.as_str())
        .collect::<Vec<_>>()
        .join("\n")
}
