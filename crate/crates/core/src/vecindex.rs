//! Embedding backends and an exact cosine top-k vector index.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::Chunk;
use crate::error::{Error, Result};

pub const HASHED_BOW_DIMENSION: usize = 256;
const HASH_SEED: u64 = 0x5eed_e5c0_a1d1_7e57;
const NORM_TOLERANCE: f64 = 1e-9;

/// An L2-normalized embedding. Construction rejects zero and non-finite input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("embedding contains non-finite values".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Validation("zero embedding vector".into()));
        }
        Ok(EmbeddingVector(values.into_iter().map(|v| v / norm).collect()))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Cosine similarity of two unit vectors, clamped to [-1, 1].
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        dot.clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingResponse {
    pub model: String,
    pub dimension: usize,
    pub vectors: Vec<Vec<f64>>,
}

/// A source of raw (not necessarily normalized) embeddings.
pub trait EmbeddingBackend: Send + Sync {
    /// Provider/version identifier recorded in every index.
    fn embedder_id(&self) -> String;

    fn dimension(&self) -> usize;

    /// Transport-level failures should be reported as [`Error::Transport`]; they are retried.
    fn embed_raw(&self, texts: &[String]) -> Result<EmbeddingResponse>;
}

/// Deterministic offline embedder: lowercase, split on non-alphanumerics,
/// hash each token into one of 256 buckets, count, normalize.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashedBagOfWords;

pub(crate) fn seeded_fnv1a(bytes: &[u8]) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = 0xcbf2_9ce4_8422_2325 ^ HASH_SEED;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

impl HashedBagOfWords {
    pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
        text.split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_lowercase)
    }

    pub fn counts(text: &str) -> Vec<f64> {
        let mut v = vec![0.0; HASHED_BOW_DIMENSION];
        for tok in Self::tokens(text) {
            v[(seeded_fnv1a(tok.as_bytes()) % HASHED_BOW_DIMENSION as u64) as usize] += 1.0;
        }
        v
    }
}

impl EmbeddingBackend for HashedBagOfWords {
    fn embedder_id(&self) -> String {
        format!("hashed-bow-v1-d{HASHED_BOW_DIMENSION}")
    }

    fn dimension(&self) -> usize {
        HASHED_BOW_DIMENSION
    }

    fn embed_raw(&self, texts: &[String]) -> Result<EmbeddingResponse> {
        Ok(EmbeddingResponse {
            model: self.embedder_id(),
            dimension: HASHED_BOW_DIMENSION,
            vectors: texts.iter().map(|t| Self::counts(t)).collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
struct EmbeddingRequest<'a> {
    model: &'a str,
    texts: &'a [String],
}

/// HTTP embedding provider. POSTs `{model, texts}` and expects
/// `{model, dimension, vectors}` back.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    pub endpoint: String,
    pub model: String,
    pub api_key: Option<String>,
    pub dimension: usize,
    pub timeout: Duration,
}

impl RemoteEmbedder {
    /// Reads `EMBED_ENDPOINT`, `EMBED_MODEL`, `EMBED_DIMENSION` and optional `EMBED_API_KEY`.
    pub fn from_env() -> Result<Self> {
        let var = |k: &str| {
            std::env::var(k).map_err(|_| Error::InvalidArgument(format!("{k} is not set")))
        };
        Ok(RemoteEmbedder {
            endpoint: var("EMBED_ENDPOINT")?,
            model: var("EMBED_MODEL")?,
            api_key: std::env::var("EMBED_API_KEY").ok(),
            dimension: var("EMBED_DIMENSION")?
                .parse()
                .map_err(|_| Error::InvalidArgument("EMBED_DIMENSION must be an integer".into()))?,
            timeout: Duration::from_secs(60),
        })
    }
}

impl EmbeddingBackend for RemoteEmbedder {
    fn embedder_id(&self) -> String {
        format!("remote:{}", self.model)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed_raw(&self, texts: &[String]) -> Result<EmbeddingResponse> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .build()
            .into();
        let mut req = agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let body = EmbeddingRequest {
            model: &self.model,
            texts,
        };
        let mut resp = req
            .send_json(&body)
            .map_err(|e| Error::Transport(e.to_string()))?;
        resp.body_mut()
            .read_json::<EmbeddingResponse>()
            .map_err(|e| Error::Transport(format!("bad embedding response: {e}")))
    }
}

/// Embeds `texts` with up to `max_attempts` tries on transport failure and
/// returns unit vectors in input order.
pub fn embed_with_retries(
    texts: &[String],
    provider: &dyn EmbeddingBackend,
    max_attempts: u32,
) -> Result<Vec<EmbeddingVector>> {
    if let Some(t) = texts.iter().find(|t| t.trim().is_empty()) {
        return Err(Error::InvalidArgument(format!("cannot embed empty text {t:?}")));
    }
    let max_attempts = max_attempts.max(1);
    let mut attempt = 0;
    let resp = loop {
        attempt += 1;
        match provider.embed_raw(texts) {
            Ok(r) => break r,
            Err(Error::Transport(msg)) if attempt >= max_attempts => {
                return Err(Error::Embedding {
                    attempts: attempt,
                    message: msg,
                })
            }
            Err(Error::Transport(_)) => continue,
            Err(e) => return Err(e),
        }
    };
    if resp.vectors.len() != texts.len() {
        return Err(Error::Embedding {
            attempts: attempt,
            message: format!("{} vectors for {} texts", resp.vectors.len(), texts.len()),
        });
    }
    let expected = provider.dimension();
    texts
        .iter()
        .zip(resp.vectors)
        .map(|(text, v)| {
            if v.len() != expected {
                return Err(Error::DimensionMismatch {
                    expected,
                    actual: v.len(),
                });
            }
            EmbeddingVector::normalized(v).map_err(|_| Error::ZeroVector(text.clone()))
        })
        .collect()
}

pub fn embed(texts: &[String], provider: &dyn EmbeddingBackend) -> Result<Vec<EmbeddingVector>> {
    embed_with_retries(texts, provider, 3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub chunk_id: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalHit {
    pub chunk_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    dimension: usize,
    embedder_id: String,
    entries: Vec<IndexEntry>,
}

const INDEX_MAGIC: &[u8; 8] = b"ESGVIDX1";

impl VectorIndex {
    pub fn from_entries(
        dimension: usize,
        embedder_id: impl Into<String>,
        entries: Vec<IndexEntry>,
    ) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if e.vector.dimension() != dimension {
                return Err(Error::DimensionMismatch {
                    expected: dimension,
                    actual: e.vector.dimension(),
                });
            }
            if !seen.insert(e.chunk_id.as_str()) {
                return Err(Error::DuplicateId(e.chunk_id.clone()));
            }
        }
        Ok(VectorIndex {
            dimension,
            embedder_id: embedder_id.into(),
            entries,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Exact scan: score every entry, sort by score descending then chunk id.
    pub fn search(&self, query: &EmbeddingVector, k: usize) -> Result<Vec<RetrievalHit>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if self.entries.is_empty() {
            return Err(Error::EmptyIndex);
        }
        if query.dimension() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                actual: query.dimension(),
            });
        }
        let mut hits: Vec<RetrievalHit> = self
            .entries
            .iter()
            .map(|e| RetrievalHit {
                chunk_id: e.chunk_id.clone(),
                score: query.cosine(&e.vector),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| a.chunk_id.cmp(&b.chunk_id))
        });
        hits.truncate(k);
        Ok(hits)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Layout (little endian): magic, u32 dimension, u32 id length + embedder id,
    /// u64 count, then per entry u32 length + chunk id and `dimension` f64 values.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(INDEX_MAGIC)?;
        w.write_all(&(self.dimension as u32).to_le_bytes())?;
        write_str(&mut w, &self.embedder_id)?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for e in &self.entries {
            write_str(&mut w, &e.chunk_id)?;
            for v in e.vector.values() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), &path.display().to_string())
    }

    pub fn read_from<R: Read>(mut r: R, name: &str) -> Result<Self> {
        let bad = |record: usize, e: std::io::Error| Error::parse(name, record, e);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|e| bad(0, e))?;
        if &magic != INDEX_MAGIC {
            return Err(Error::parse(name, 0, "not a vector index file"));
        }
        let dimension = read_u32(&mut r).map_err(|e| bad(0, e))? as usize;
        let embedder_id = read_str(&mut r).map_err(|e| bad(0, e))?;
        let count = read_u64(&mut r).map_err(|e| bad(0, e))? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 20));
        for i in 1..=count {
            let chunk_id = read_str(&mut r).map_err(|e| bad(i, e))?;
            let mut values = Vec::with_capacity(dimension);
            let mut buf = [0u8; 8];
            for _ in 0..dimension {
                r.read_exact(&mut buf).map_err(|e| bad(i, e))?;
                values.push(f64::from_le_bytes(buf));
            }
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            if values.iter().any(|v| !v.is_finite()) || (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::parse(name, i, "stored vector is not unit length"));
            }
            // stored bit-exactly; no renormalization on load
            entries.push(IndexEntry {
                chunk_id,
                vector: EmbeddingVector(values),
            });
        }
        VectorIndex::from_entries(dimension, embedder_id, entries)
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_all(&(s.len() as u32).to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = read_u32(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub fn build_index(chunks: &[Chunk], provider: &dyn EmbeddingBackend) -> Result<VectorIndex> {
    if chunks.is_empty() {
        return Err(Error::InvalidArgument("cannot build an index from zero chunks".into()));
    }
    let mut seen = HashSet::new();
    if let Some(dup) = chunks.iter().find(|c| !seen.insert(c.chunk_id.as_str())) {
        return Err(Error::DuplicateId(dup.chunk_id.clone()));
    }
    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let vectors = embed(&texts, provider)?;
    let entries = chunks
        .iter()
        .zip(vectors)
        .map(|(c, vector)| IndexEntry {
            chunk_id: c.chunk_id.clone(),
            vector,
        })
        .collect();
    VectorIndex::from_entries(provider.dimension(), provider.embedder_id(), entries)
}

pub fn query_top_k(
    index: &VectorIndex,
    query_text: &str,
    k: usize,
    provider: &dyn EmbeddingBackend,
) -> Result<Vec<RetrievalHit>> {
    if provider.embedder_id() != index.embedder_id {
        return Err(Error::EmbedderMismatch {
            index: index.embedder_id.clone(),
            provider: provider.embedder_id(),
        });
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if index.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let query = embed(&[query_text.to_string()], provider)?.remove(0);
    index.search(&query, k)
}
