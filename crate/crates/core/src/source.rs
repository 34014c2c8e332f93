//! Corpus-grounded verification.
//!
//! Documents supplied by the user (usability test reports, research notes) are
//! chunked by token count and stored in an inverted index. Claims of a
//! response are matched against chunks by exact cosine scoring; a claim is
//! covered when at least one of its top-k chunks reaches the citation
//! threshold.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::text::{self, cosine_from_counts, Claim, TermVector};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SourceError {
    #[error("document `{0}` is already ingested")]
    DuplicateDocument(String),
    #[error("document `{0}` has no content")]
    EmptyDocument(String),
    #[error("corpus index is empty")]
    EmptyIndex,
    #[error("k must be positive")]
    InvalidK,
    #[error("invalid chunking: {0}")]
    InvalidChunking(String),
}

impl SourceError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::DuplicateDocument(_) => "DuplicateDocument",
            Self::EmptyDocument(_) => "EmptyDocument",
            Self::EmptyIndex => "EmptyIndex",
            Self::InvalidK => "InvalidK",
            Self::InvalidChunking(_) => "InvalidChunking",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChunkingConfig {
    pub max_tokens: usize,
    pub overlap: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self {
            max_tokens: 200,
            overlap: 40,
        }
    }
}

impl ChunkingConfig {
    pub fn validate(&self) -> Result<(), SourceError> {
        if self.max_tokens == 0 || self.overlap >= self.max_tokens {
            return Err(SourceError::InvalidChunking(format!(
                "need 0 <= overlap < max_tokens, got overlap {} and max_tokens {}",
                self.overlap, self.max_tokens
            )));
        }
        Ok(())
    }

    /// Token ranges `[start, end)` of the chunks of an `n`-token document.
    pub fn windows(&self, n: usize) -> Vec<(usize, usize)> {
        let stride = self.max_tokens - self.overlap;
        let mut out = Vec::new();
        let mut start = 0;
        while start < n {
            let end = (start + self.max_tokens).min(n);
            out.push((start, end));
            if end == n {
                break;
            }
            start += stride;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub doc_id: String,
    #[serde(default)]
    pub title: String,
    pub body: String,
    #[serde(default = "Utc::now")]
    pub ingested_at: DateTime<Utc>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl CorpusDocument {
    pub fn new(doc_id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            title: title.into(),
            body: body.into(),
            ingested_at: Utc::now(),
            metadata: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub seq: usize,
    pub text: String,
    pub token_count: usize,
}

/// Split a document body into overlapping token windows. Each chunk's text is
/// the source slice from its first token to its last, so re-tokenizing a
/// chunk yields exactly its tokens.
pub fn chunk_document(doc_id: &str, body: &str, config: &ChunkingConfig) -> Vec<Chunk> {
    let spans = text::token_spans(body);
    config
        .windows(spans.len())
        .into_iter()
        .enumerate()
        .map(|(seq, (s, e))| Chunk {
            doc_id: doc_id.to_owned(),
            seq,
            text: body[spans[s].start..spans[e - 1].end].to_owned(),
            token_count: e - s,
        })
        .collect()
}

#[derive(Debug)]
struct IndexedChunk {
    chunk: Chunk,
    norm_sq: u64,
}

/// A retrieval hit.
#[derive(Debug, Clone, PartialEq)]
pub struct Retrieved<'a, T> {
    pub chunk: &'a Chunk,
    pub similarity: text::SimilarityScore<T>,
}

/// Inverted token index with exact cosine scoring.
#[derive(Debug, Default)]
pub struct CorpusIndex {
    config: ChunkingConfig,
    documents: BTreeMap<String, CorpusDocument>,
    chunks: Vec<IndexedChunk>,
    /// (doc_id, seq) → position in `chunks`; iteration order is the tie-break order.
    order: BTreeMap<(String, usize), usize>,
    vocab: HashMap<String, u32>,
    postings: Vec<Vec<(u32, u32)>>,
}

impl CorpusIndex {
    pub fn new(config: ChunkingConfig) -> Result<Self, SourceError> {
        config.validate()?;
        Ok(Self {
            config,
            ..Self::default()
        })
    }

    pub fn config(&self) -> ChunkingConfig {
        self.config
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunk_count(&self) -> usize {
        self.chunks.len()
    }

    pub fn document(&self, doc_id: &str) -> Option<&CorpusDocument> {
        self.documents.get(doc_id)
    }

    pub fn documents(&self) -> impl Iterator<Item = &CorpusDocument> {
        self.documents.values()
    }

    /// Chunks in (doc_id, seq) order.
    pub fn chunks(&self) -> impl Iterator<Item = &Chunk> {
        self.order.values().map(|&i| &self.chunks[i].chunk)
    }

    pub fn chunk(&self, doc_id: &str, seq: usize) -> Option<&Chunk> {
        self.order
            .get(&(doc_id.to_owned(), seq))
            .map(|&i| &self.chunks[i].chunk)
    }

    /// Chunk and index a document; returns the number of chunks.
    pub fn ingest_document(&mut self, doc: CorpusDocument) -> Result<usize, SourceError> {
        if self.documents.contains_key(&doc.doc_id) {
            return Err(SourceError::DuplicateDocument(doc.doc_id));
        }
        let chunks = chunk_document(&doc.doc_id, &doc.body, &self.config);
        if chunks.is_empty() {
            return Err(SourceError::EmptyDocument(doc.doc_id));
        }
        let n = chunks.len();
        for chunk in chunks {
            let pos = self.chunks.len() as u32;
            let tv = TermVector::from_text(&chunk.text);
            for (token, &count) in tv.counts() {
                let next_id = self.vocab.len() as u32;
                let term = *self.vocab.entry(token.clone()).or_insert(next_id);
                if term as usize == self.postings.len() {
                    self.postings.push(Vec::new());
                }
                self.postings[term as usize].push((pos, count));
            }
            self.order.insert((chunk.doc_id.clone(), chunk.seq), pos as usize);
            self.chunks.push(IndexedChunk {
                chunk,
                norm_sq: tv.norm_sq(),
            });
        }
        self.documents.insert(doc.doc_id.clone(), doc);
        Ok(n)
    }

    /// Top-k chunks by cosine similarity, ties broken by (doc_id, seq).
    ///
    /// Always returns `min(k, chunk_count)` hits; chunks sharing no token with
    /// the query fill the tail with similarity zero.
    pub fn retrieve<T: Scalar>(&self, query: &str, k: usize) -> Result<Vec<Retrieved<'_, T>>, SourceError> {
        if self.chunks.is_empty() {
            return Err(SourceError::EmptyIndex);
        }
        if k == 0 {
            return Err(SourceError::InvalidK);
        }
        let q = TermVector::from_text(query);
        let mut dots: HashMap<u32, u64> = HashMap::new();
        for (token, &qc) in q.counts() {
            if let Some(&term) = self.vocab.get(token) {
                for &(pos, c) in &self.postings[term as usize] {
                    *dots.entry(pos).or_insert(0) += u64::from(qc) * u64::from(c);
                }
            }
        }

        let key = |pos: usize| {
            let c = &self.chunks[pos].chunk;
            (c.doc_id.as_str(), c.seq)
        };
        let mut scored: Vec<(text::SimilarityScore<T>, usize)> = dots
            .into_iter()
            .map(|(pos, dot)| {
                let pos = pos as usize;
                (cosine_from_counts(dot, q.norm_sq(), self.chunks[pos].norm_sq), pos)
            })
            .collect();
        scored.sort_by(|(sa, pa), (sb, pb)| {
            sb.value()
                .partial_cmp(&sa.value())
                .expect("similarities are finite")
                .then_with(|| key(*pa).cmp(&key(*pb)))
        });
        // zero scores sort after every positive one, so the zero-similarity
        // candidates can be appended in key order
        let mut seen: BTreeSet<usize> = BTreeSet::new();
        let mut out: Vec<(text::SimilarityScore<T>, usize)> = Vec::with_capacity(k.min(self.chunks.len()));
        let positive = scored.iter().take_while(|(s, _)| s.value() > T::zero()).count();
        for &(s, pos) in scored.iter().take(positive.min(k)) {
            out.push((s, pos));
            seen.insert(pos);
        }
        if out.len() < k {
            for &pos in self.order.values() {
                if out.len() == k {
                    break;
                }
                if !seen.contains(&pos) {
                    out.push((text::SimilarityScore::zero(), pos));
                }
            }
        }
        Ok(out
            .into_iter()
            .map(|(similarity, pos)| Retrieved {
                chunk: &self.chunks[pos].chunk,
                similarity,
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SourceConfig {
    /// Minimum similarity for a chunk to be cited.
    pub tau: f64,
    /// Minimum coverage for the response to pass.
    pub pass_threshold: f64,
    pub top_k: usize,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            pass_threshold: 0.8,
            top_k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCitation {
    pub claim_id: String,
    pub doc_id: String,
    pub chunk_seq: usize,
    pub similarity: crate::SimilarityScore,
    pub doc_title: String,
    pub excerpt: String,
}

impl SourceCitation {
    /// Guidance line shown next to a cited claim.
    pub fn guidance(&self) -> String {
        let title = if self.doc_title.is_empty() {
            self.doc_id.as_str()
        } else {
            self.doc_title.as_str()
        };
        format!(
            "Matches \"{title}\" (part {}, similarity {:.2}): \"{}\"",
            self.chunk_seq + 1,
            self.similarity.value(),
            self.excerpt
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceVerification {
    pub response_id: String,
    pub citations: Vec<SourceCitation>,
    pub checkable_claims: usize,
    pub matched_claims: usize,
    pub coverage: f64,
    pub passed: bool,
}

const EXCERPT_CHARS: usize = 160;

fn excerpt(text: &str) -> String {
    let mut chars = text.chars();
    let head: String = chars.by_ref().take(EXCERPT_CHARS).collect();
    if chars.next().is_some() {
        format!("{head}…")
    } else {
        head
    }
}

/// Match every checkable claim against the corpus.
pub fn verify_source(
    index: &CorpusIndex,
    response_id: &str,
    claims: &[Claim],
    config: &SourceConfig,
) -> Result<SourceVerification, SourceError> {
    if index.is_empty() {
        return Err(SourceError::EmptyIndex);
    }
    let mut citations = Vec::new();
    let mut checkable = 0;
    let mut matched = 0;
    for claim in claims.iter().filter(|c| c.checkable) {
        checkable += 1;
        let hits = index.retrieve::<f64>(&claim.text, config.top_k)?;
        let before = citations.len();
        for hit in hits.into_iter().filter(|h| h.similarity.value() >= config.tau) {
            let title = index
                .document(&hit.chunk.doc_id)
                .map(|d| d.title.clone())
                .unwrap_or_default();
            citations.push(SourceCitation {
                claim_id: claim.id.clone(),
                doc_id: hit.chunk.doc_id.clone(),
                chunk_seq: hit.chunk.seq,
                similarity: hit.similarity,
                doc_title: title,
                excerpt: excerpt(&hit.chunk.text),
            });
        }
        if citations.len() > before {
            matched += 1;
        }
    }
    let coverage = crate::fraction(matched, checkable);
    Ok(SourceVerification {
        response_id: response_id.to_owned(),
        citations,
        checkable_claims: checkable,
        matched_claims: matched,
        coverage,
        passed: coverage >= config.pass_threshold,
    })
}
