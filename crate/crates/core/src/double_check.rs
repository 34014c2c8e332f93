//! Web-grounded verification with tri-state highlights.
//!
//! Each checkable claim is sent to a [`SearchClient`]; the best snippet
//! similarity decides between `supported` (blue, evidence links) and
//! `unsupported` (red, a recommended follow-up search). Claims that need no
//! verification, or whose search failed, get no highlight.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::{self, Claim};
use crate::SimilarityScore;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub url: String,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub snippet: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SearchError {
    #[error("search query is empty")]
    EmptyQuery,
    #[error("search unavailable: {0}")]
    Unavailable(String),
    #[error("invalid search fixture: {0}")]
    InvalidFixture(String),
}

impl SearchError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::EmptyQuery => "EmptyQuery",
            Self::Unavailable(_) => "SearchUnavailable",
            Self::InvalidFixture(_) => "InvalidFixture",
        }
    }
}

pub trait SearchClient: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError>;
}

/// Returns hits from a query → hits table; unknown queries yield no hits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FixtureSearch {
    table: HashMap<String, Vec<SearchHit>>,
}

impl FixtureSearch {
    pub fn new(table: HashMap<String, Vec<SearchHit>>) -> Result<Self, SearchError> {
        for (query, hits) in &table {
            if hits.iter().any(|h| h.url.trim().is_empty()) {
                return Err(SearchError::InvalidFixture(format!(
                    "hit with empty url under `{query}`"
                )));
            }
        }
        Ok(Self { table })
    }

    pub fn from_json(raw: &str) -> Result<Self, SearchError> {
        let table = serde_json::from_str(raw).map_err(|e| SearchError::InvalidFixture(e.to_string()))?;
        Self::new(table)
    }

    pub fn from_path(path: &Path) -> Result<Self, SearchError> {
        let raw =
            fs::read_to_string(path).map_err(|e| SearchError::InvalidFixture(format!("{}: {e}", path.display())))?;
        Self::from_json(&raw)
    }

    pub fn insert(&mut self, query: impl Into<String>, hits: Vec<SearchHit>) {
        self.table.insert(query.into(), hits);
    }
}

impl SearchClient for FixtureSearch {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError> {
        if query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        Ok(self.table.get(query).cloned().unwrap_or_default())
    }
}

/// Queries an HTTP endpoint as `GET {url}?q=<query>`, expecting a JSON array
/// of hits in the fixture format.
#[derive(Debug)]
pub struct HttpSearch {
    url: String,
    agent: ureq::Agent,
}

impl HttpSearch {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        Self {
            url: url.into(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl SearchClient for HttpSearch {
    fn search(&self, query: &str) -> Result<Vec<SearchHit>, SearchError> {
        if query.trim().is_empty() {
            return Err(SearchError::EmptyQuery);
        }
        self.agent
            .get(&self.url)
            .query("q", query)
            .call()
            .map_err(|e| SearchError::Unavailable(e.to_string()))?
            .into_json()
            .map_err(|e| SearchError::Unavailable(format!("malformed reply: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighlightStatus {
    Supported,
    Unsupported,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HighlightColor {
    Blue,
    Red,
    None,
}

impl HighlightStatus {
    pub fn color(self) -> HighlightColor {
        match self {
            Self::Supported => HighlightColor::Blue,
            Self::Unsupported => HighlightColor::Red,
            Self::NotApplicable => HighlightColor::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimHighlight {
    pub claim_id: String,
    pub status: HighlightStatus,
    pub color: HighlightColor,
    pub evidence: Vec<SearchHit>,
    pub recommended_query: String,
    pub best_similarity: SimilarityScore,
}

impl ClaimHighlight {
    pub fn supported(claim_id: &str, evidence: Vec<SearchHit>, best: SimilarityScore) -> Self {
        assert!(!evidence.is_empty(), "supported highlight needs evidence");
        Self::build(claim_id, HighlightStatus::Supported, evidence, String::new(), best)
    }

    pub fn unsupported(claim_id: &str, recommended_query: &str, best: SimilarityScore) -> Self {
        assert!(!recommended_query.is_empty(), "unsupported highlight needs a query");
        Self::build(
            claim_id,
            HighlightStatus::Unsupported,
            Vec::new(),
            recommended_query.to_owned(),
            best,
        )
    }

    pub fn not_applicable(claim_id: &str) -> Self {
        Self::build(
            claim_id,
            HighlightStatus::NotApplicable,
            Vec::new(),
            String::new(),
            SimilarityScore::zero(),
        )
    }

    fn build(
        claim_id: &str,
        status: HighlightStatus,
        evidence: Vec<SearchHit>,
        recommended_query: String,
        best_similarity: SimilarityScore,
    ) -> Self {
        Self {
            claim_id: claim_id.to_owned(),
            color: status.color(),
            status,
            evidence,
            recommended_query,
            best_similarity,
        }
    }

    /// Status, color and payload agree.
    pub fn is_consistent(&self) -> bool {
        let blue = self.color == HighlightColor::Blue;
        let red = self.color == HighlightColor::Red;
        let none = self.color == HighlightColor::None;
        (self.status == HighlightStatus::Supported) == blue
            && blue == !self.evidence.is_empty()
            && (self.status == HighlightStatus::Unsupported) == red
            && red == !self.recommended_query.is_empty()
            && (self.status == HighlightStatus::NotApplicable) == none
            && none == (self.evidence.is_empty() && self.recommended_query.is_empty())
    }

    /// Guidance line shown for the highlight.
    pub fn guidance(&self) -> String {
        match self.status {
            HighlightStatus::Supported => {
                let links: Vec<&str> = self.evidence.iter().map(|h| h.url.as_str()).collect();
                format!("Similar content found on the web: {}", links.join(", "))
            }
            HighlightStatus::Unsupported => {
                format!(
                    "No similar content found. Try searching: \"{}\"",
                    self.recommended_query
                )
            }
            HighlightStatus::NotApplicable => String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoubleCheckConfig {
    pub tau: f64,
    pub pass_threshold: f64,
}

impl Default for DoubleCheckConfig {
    fn default() -> Self {
        Self {
            tau: 0.5,
            pass_threshold: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubleCheckReport {
    pub response_id: String,
    pub highlights: Vec<ClaimHighlight>,
    pub checkable_claims: usize,
    pub supported_claims: usize,
    pub coverage: f64,
    pub passed: bool,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Classify every claim of one response. Search failures downgrade the
/// claim to `not_applicable` with a warning; the batch itself never fails.
pub fn double_check(
    client: &dyn SearchClient,
    response_id: &str,
    claims: &[Claim],
    config: &DoubleCheckConfig,
) -> DoubleCheckReport {
    let mut highlights = Vec::with_capacity(claims.len());
    let mut warnings = Vec::new();
    let mut checkable = 0;
    let mut supported = 0;
    for claim in claims {
        if !claim.checkable {
            highlights.push(ClaimHighlight::not_applicable(&claim.id));
            continue;
        }
        checkable += 1;
        let hits = match client.search(&claim.text) {
            Ok(hits) => hits,
            Err(e) => {
                warnings.push(format!("{}: {e}", claim.id));
                highlights.push(ClaimHighlight::not_applicable(&claim.id));
                continue;
            }
        };
        let scored: Vec<(SimilarityScore, SearchHit)> = hits
            .into_iter()
            .map(|h| (text::similarity(&claim.text, &h.snippet), h))
            .collect();
        let best =
            scored.iter().map(|(s, _)| *s).fold(
                SimilarityScore::zero(),
                |a, b| if b.value() > a.value() { b } else { a },
            );
        if best.value() >= config.tau {
            let evidence = scored
                .into_iter()
                .filter(|(s, _)| s.value() >= config.tau)
                .map(|(_, h)| h)
                .collect();
            supported += 1;
            highlights.push(ClaimHighlight::supported(&claim.id, evidence, best));
        } else {
            highlights.push(ClaimHighlight::unsupported(&claim.id, &claim.text, best));
        }
    }
    let coverage = crate::fraction(supported, checkable);
    DoubleCheckReport {
        response_id: response_id.to_owned(),
        highlights,
        checkable_claims: checkable,
        supported_claims: supported,
        coverage,
        passed: coverage >= config.pass_threshold,
        warnings,
    }
}
