//! PDF text-layer extraction. Reading order is whatever the content stream gives;
//! images and tables are not reconstructed.

use lopdf::Document;

use crate::ingest::IngestError;

/// Raw (unnormalized) text of every physical page, in page order.
pub(crate) fn pdf_pages(bytes: &[u8]) -> Result<Vec<String>, IngestError> {
    let doc = Document::load_mem(bytes)
        .map_err(|e| IngestError::UnsupportedFormat(format!("unreadable PDF: {e}")))?;
    // lopdf opens documents with an empty user password on its own; anything
    // still locked after load needs a password we do not have.
    if doc.is_encrypted() && doc.encryption_state.is_none() {
        return Err(IngestError::EncryptedDocument);
    }
    let pages = doc.get_pages();
    if pages.is_empty() {
        return Err(IngestError::NoExtractableText);
    }
    let last = *pages.keys().next_back().unwrap_or(&0);
    Ok((1..=last)
        .map(|page_no| {
            if !pages.contains_key(&page_no) {
                return String::new();
            }
            // fragments with an undecodable font are skipped, the rest of the page is kept
            doc.extract_text_chunks(&[page_no])
                .into_iter()
                .filter_map(Result::ok)
                .collect::<Vec<_>>()
                .join("\n")
        })
        .collect())
}
