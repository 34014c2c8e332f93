//! Text primitives shared by every verifier.
//!
//! Tokenization, sentence-level claim segmentation, the checkability rule and
//! the term-frequency cosine similarity live here. Every matching decision in
//! the crate (retrieval, web evidence, cross-provider clustering) goes through
//! [`cosine_from_counts`], so scores computed by different code paths for the
//! same pair of texts are bit-identical.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::Path;
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Version tag of the embedded stopword list.
pub const STOPWORDS_VERSION: u32 = 1;

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_v1.txt");
const DEFAULT_HEDGES: &str = include_str!("../data/hedges.txt");

/// Claims with fewer content tokens than this are never checkable.
pub const MIN_CONTENT_TOKENS: usize = 4;

static DEFAULT_LEXICON: LazyLock<Lexicon> = LazyLock::new(Lexicon::default);

/// A token together with its byte range in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSpan {
    pub token: String,
    pub start: usize,
    pub end: usize,
}

/// Maximal runs of letters/digits, lowercased.
pub fn tokenize(text: &str) -> Vec<String> {
    token_spans(text).into_iter().map(|t| t.token).collect()
}

/// Like [`tokenize`], keeping the byte offsets of each token.
pub fn token_spans(text: &str) -> Vec<TokenSpan> {
    let mut spans = Vec::new();
    let mut current: Option<(usize, String)> = None;
    for (idx, ch) in text.char_indices() {
        if ch.is_alphanumeric() {
            let (_, buf) = current.get_or_insert_with(|| (idx, String::new()));
            buf.extend(ch.to_lowercase());
        } else if let Some((start, token)) = current.take() {
            spans.push(TokenSpan { token, start, end: idx });
        }
    }
    if let Some((start, token)) = current {
        spans.push(TokenSpan {
            token,
            start,
            end: text.len(),
        });
    }
    spans
}

/// A cosine similarity in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityScore<T>(T);

impl<T: Scalar> SimilarityScore<T> {
    pub fn new(value: T) -> Option<Self> {
        (value >= T::zero() && value <= T::one()).then_some(Self(value))
    }

    pub fn zero() -> Self {
        Self(T::zero())
    }

    pub fn one() -> Self {
        Self(T::one())
    }

    pub fn value(self) -> T {
        self.0
    }
}

/// Term-frequency vector of a text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermVector {
    counts: BTreeMap<String, u32>,
    norm_sq: u64,
}

impl TermVector {
    pub fn from_text(text: &str) -> Self {
        Self::from_tokens(tokenize(text))
    }

    pub fn from_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Self {
        let mut counts = BTreeMap::new();
        for token in tokens {
            *counts.entry(token).or_insert(0u32) += 1;
        }
        let norm_sq = counts.values().map(|&c| u64::from(c) * u64::from(c)).sum();
        Self { counts, norm_sq }
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &BTreeMap<String, u32> {
        &self.counts
    }

    pub fn norm_sq(&self) -> u64 {
        self.norm_sq
    }

    pub fn dot(&self, other: &TermVector) -> u64 {
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .counts
            .iter()
            .filter_map(|(t, &a)| large.counts.get(t).map(|&b| u64::from(a) * u64::from(b)))
            .sum()
    }

    pub fn cosine<T: Scalar>(&self, other: &TermVector) -> SimilarityScore<T> {
        cosine_from_counts(self.dot(other), self.norm_sq, other.norm_sq)
    }
}

/// Cosine of two integer term-frequency vectors given their dot product and
/// squared norms.
///
/// All inputs are exact integers, so any caller that arrives at the same
/// three numbers (by whatever summation order) gets the same bits back. The
/// product of the norms is taken before the square root so that identical
/// vectors score exactly one.
pub fn cosine_from_counts<T: Scalar>(dot: u64, norm_sq_a: u64, norm_sq_b: u64) -> SimilarityScore<T> {
    if norm_sq_a == 0 || norm_sq_b == 0 || dot == 0 {
        return SimilarityScore::zero();
    }
    let denom = T::from_count(u128::from(norm_sq_a) * u128::from(norm_sq_b)).sqrt();
    let value = T::from_count(dot) / denom;
    SimilarityScore(value.min(T::one()).max(T::zero()))
}

/// Cosine similarity of the term-frequency vectors of `a` and `b`; zero when
/// either has no tokens.
pub fn similarity<T: Scalar>(a: &str, b: &str) -> SimilarityScore<T> {
    TermVector::from_text(a).cosine(&TermVector::from_text(b))
}

/// A sentence-level unit of an AI response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub id: String,
    pub response_id: String,
    pub text: String,
    /// Character offsets `(start, end)`, half-open, into the response text.
    pub span: (usize, usize),
    pub checkable: bool,
}

/// Stopwords and hedging markers driving the checkability rule.
#[derive(Debug, Clone)]
pub struct Lexicon {
    stopwords: HashSet<String>,
    hedges: Vec<Vec<String>>,
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::from_lists(DEFAULT_STOPWORDS, DEFAULT_HEDGES)
    }
}

fn list_entries(raw: &str) -> impl Iterator<Item = &str> {
    raw.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

impl Lexicon {
    /// Build from newline-separated lists; blank lines and `#` comments are skipped.
    pub fn from_lists(stopwords: &str, hedges: &str) -> Self {
        let stopwords = list_entries(stopwords).flat_map(tokenize).collect();
        let hedges = list_entries(hedges).map(tokenize).filter(|h| !h.is_empty()).collect();
        Self { stopwords, hedges }
    }

    /// Load either list from a UTF-8 file, falling back to the embedded default.
    pub fn from_files(stopwords: Option<&Path>, hedges: Option<&Path>) -> io::Result<Self> {
        let stop = match stopwords {
            Some(p) => fs::read_to_string(p)?,
            None => DEFAULT_STOPWORDS.to_owned(),
        };
        let hedge = match hedges {
            Some(p) => fs::read_to_string(p)?,
            None => DEFAULT_HEDGES.to_owned(),
        };
        Ok(Self::from_lists(&stop, &hedge))
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(token)
    }

    pub fn content_token_count(&self, text: &str) -> usize {
        tokenize(text).iter().filter(|t| !self.is_stopword(t)).count()
    }

    pub fn is_hedged(&self, text: &str) -> bool {
        let tokens = tokenize(text);
        self.hedges.iter().any(|h| tokens.starts_with(h))
    }

    pub fn classify_checkability(&self, claim_text: &str) -> bool {
        let trimmed = claim_text.trim();
        !(trimmed.ends_with('?') || self.content_token_count(trimmed) < MIN_CONTENT_TOKENS || self.is_hedged(trimmed))
    }

    pub fn segment_claims(&self, response_id: &str, text: &str) -> Vec<Claim> {
        let chars: Vec<char> = text.chars().collect();
        sentence_spans(&chars)
            .into_iter()
            .enumerate()
            .map(|(i, (start, end))| {
                let text: String = chars[start..end].iter().collect();
                Claim {
                    id: format!("{response_id}#{i}"),
                    response_id: response_id.to_owned(),
                    checkable: self.classify_checkability(&text),
                    text,
                    span: (start, end),
                }
            })
            .collect()
    }
}

/// The embedded default lexicon.
pub fn default_lexicon() -> &'static Lexicon {
    &DEFAULT_LEXICON
}

pub fn classify_checkability(claim_text: &str) -> bool {
    DEFAULT_LEXICON.classify_checkability(claim_text)
}

/// Split a response into claims using the default lexicon.
pub fn segment_claims(response_id: &str, text: &str) -> Vec<Claim> {
    DEFAULT_LEXICON.segment_claims(response_id, text)
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '!' | '?' | '…')
}

/// Trimmed, non-empty sentence spans in character offsets.
///
/// A run of terminators ends a sentence when it is followed by whitespace or
/// the end of text, unless the run is an ellipsis (`..` or `…`). Newlines
/// always end a sentence.
fn sentence_spans(chars: &[char]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut push = |start: usize, end: usize| {
        let mut s = start;
        let mut e = end;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s < e {
            spans.push((s, e));
        }
    };

    let n = chars.len();
    let mut seg_start = 0;
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if c == '\n' {
            push(seg_start, i);
            seg_start = i + 1;
            i += 1;
        } else if is_terminator(c) {
            let mut j = i;
            while j < n && is_terminator(chars[j]) {
                j += 1;
            }
            let run = &chars[i..j];
            let ellipsis = run.contains(&'…') || run.windows(2).any(|w| w == ['.', '.']);
            if !ellipsis && (j == n || chars[j].is_whitespace()) {
                push(seg_start, j);
                seg_start = j;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    push(seg_start, n);
    spans
}
