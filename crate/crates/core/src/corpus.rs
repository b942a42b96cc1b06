//! Disclosure documents and sliding-window chunking with character provenance.
//!
//! All offsets are counted in Unicode scalar values, not bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const DEFAULT_CHUNK_TOKENS: usize = 256;
pub const DEFAULT_CHUNK_OVERLAP: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageOffset {
    pub page_number: u32,
    pub char_start: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub company: String,
    pub title: String,
    pub text: String,
    #[serde(default)]
    pub page_offsets: Vec<PageOffset>,
}

/// Structured input: metadata plus either full `text` or per-page `pages`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DocumentSource {
    #[serde(default)]
    pub company: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub pages: Option<Vec<String>>,
}

fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

impl Document {
    /// Builds a document from raw text. The id is derived from the normalized text.
    pub fn from_text(company: &str, title: &str, text: &str) -> Result<Self> {
        let text = normalize_newlines(text);
        if text.trim().is_empty() {
            return Err(Error::EmptyText);
        }
        Ok(Document {
            doc_id: format!("doc-{}", &hex_digest(text.as_bytes())[..16]),
            company: company.to_string(),
            title: title.to_string(),
            text,
            page_offsets: Vec::new(),
        })
    }

    /// Joins pages with a single LF and records where each page begins.
    /// Pages that start at or past the end of the text (trailing blanks) get no offset.
    pub fn from_pages(company: &str, title: &str, pages: &[String]) -> Result<Self> {
        let pages: Vec<String> = pages.iter().map(|p| normalize_newlines(p)).collect();
        let mut doc = Document::from_text(company, title, &pages.join("\n"))?;
        let len = doc.char_len();
        let mut start = 0usize;
        for (i, page) in pages.iter().enumerate() {
            if start < len {
                doc.page_offsets.push(PageOffset {
                    page_number: i as u32 + 1,
                    char_start: start,
                });
            }
            start += page.chars().count() + 1;
        }
        Ok(doc)
    }

    pub fn from_source(src: DocumentSource, company: &str, fallback_title: &str) -> Result<Self> {
        let company = src.company.as_deref().unwrap_or(company);
        let title = src.title.as_deref().unwrap_or(fallback_title);
        match (src.text, src.pages) {
            (Some(text), None) => Document::from_text(company, title, &text),
            (None, Some(pages)) => Document::from_pages(company, title, &pages),
            _ => Err(Error::Validation(
                "structured document needs exactly one of `text` or `pages`".into(),
            )),
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Substring by character offsets, end exclusive.
    pub fn slice(&self, char_start: usize, char_end: usize) -> Option<&str> {
        char_slice(&self.text, char_start, char_end)
    }

    pub fn validate(&self) -> Result<()> {
        if self.text.is_empty() {
            return Err(Error::EmptyText);
        }
        let len = self.char_len();
        let increasing = self
            .page_offsets
            .windows(2)
            .all(|w| w[0].char_start < w[1].char_start);
        if !increasing || self.page_offsets.iter().any(|p| p.char_start >= len) {
            return Err(Error::Validation(format!(
                "document {:?} has invalid page offsets",
                self.doc_id
            )));
        }
        Ok(())
    }
}

pub(crate) fn char_slice(text: &str, char_start: usize, char_end: usize) -> Option<&str> {
    if char_start > char_end {
        return None;
    }
    let mut indices = text
        .char_indices()
        .map(|(b, _)| b)
        .chain(std::iter::once(text.len()));
    let start = indices.nth(char_start)?;
    let end = if char_end == char_start {
        start
    } else {
        indices.nth(char_end - char_start - 1)?
    };
    Some(&text[start..end])
}

/// Reads plain text, or the structured JSON form when the file ends in `.json`.
pub fn ingest_document(path: &Path, company: &str) -> Result<Document> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let raw = String::from_utf8(bytes).map_err(|_| Error::InvalidEncoding(path.to_path_buf()))?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        let src: DocumentSource = serde_json::from_str(&raw)
            .map_err(|e| Error::parse(path.display(), 1, e))?;
        Document::from_source(src, company, &stem)
    } else {
        Document::from_text(company, &stem, &raw)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub chunk_id: String,
    pub char_start: usize,
    pub char_end: usize,
    pub text: String,
}

impl Chunk {
    pub fn make_id(doc_id: &str, char_start: usize, char_end: usize) -> String {
        format!("{doc_id}:{char_start}-{char_end}")
    }

    /// Inverse of [`Chunk::make_id`].
    pub fn parse_id(chunk_id: &str) -> Option<(&str, usize, usize)> {
        let (doc, span) = chunk_id.rsplit_once(':')?;
        let (start, end) = span.split_once('-')?;
        Some((doc, start.parse().ok()?, end.parse().ok()?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkParams {
    pub target_size: usize,
    pub overlap: usize,
}

impl Default for ChunkParams {
    fn default() -> Self {
        ChunkParams {
            target_size: DEFAULT_CHUNK_TOKENS,
            overlap: DEFAULT_CHUNK_OVERLAP,
        }
    }
}

impl ChunkParams {
    pub fn validate(&self) -> Result<()> {
        if self.target_size == 0 || self.overlap >= self.target_size {
            return Err(Error::InvalidArgument(format!(
                "chunking needs target_size >= 1 and overlap < target_size (got {} / {})",
                self.target_size, self.overlap
            )));
        }
        Ok(())
    }
}

/// Character spans `[start, end)` of whitespace-delimited tokens.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    let mut pos = 0;
    for ch in text.chars() {
        match (ch.is_whitespace(), start) {
            (false, None) => start = Some(pos),
            (true, Some(s)) => {
                spans.push((s, pos));
                start = None;
            }
            _ => {}
        }
        pos += 1;
    }
    if let Some(s) = start {
        spans.push((s, pos));
    }
    spans
}

/// Sliding windows of `target_size` tokens advancing by `target_size - overlap`.
/// A chunk spans from its first token's start to its last token's end.
pub fn chunk_document(doc: &Document, params: ChunkParams) -> Result<Vec<Chunk>> {
    params.validate()?;
    let spans = token_spans(&doc.text);
    let chars: Vec<char> = doc.text.chars().collect();
    let stride = params.target_size - params.overlap;
    let mut chunks = Vec::new();
    let mut first = 0;
    while first < spans.len() {
        let last = (first + params.target_size).min(spans.len()) - 1;
        let (char_start, char_end) = (spans[first].0, spans[last].1);
        chunks.push(Chunk {
            doc_id: doc.doc_id.clone(),
            chunk_id: Chunk::make_id(&doc.doc_id, char_start, char_end),
            char_start,
            char_end,
            text: chars[char_start..char_end].iter().collect(),
        });
        if last + 1 == spans.len() {
            break;
        }
        first += stride;
    }
    Ok(chunks)
}
