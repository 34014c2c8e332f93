//! Sessions, turns and the three-mode workflow.
//!
//! The mode gate is structural: prompts are only accepted in generation mode,
//! verification needs at least one response and decision needs at least one
//! recorded verification. Returning to generation is always allowed.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::compare::{self, CompareConfig, CompareError, CompareReport, ProviderClaims};
use crate::decision::{self, Candidate, Criterion, CriterionResult, DecisionRecord, Weights};
use crate::double_check::{self, DoubleCheckConfig, DoubleCheckReport, SearchClient};
use crate::error::{Error, Result};
use crate::gateway::{GenerationResponse, HistoryTurn, ProviderRegistry};
use crate::source::{self, CorpusIndex, SourceConfig, SourceVerification};
use crate::text::{Claim, Lexicon};
use crate::DecisionTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Generation,
    Verification,
    Decision,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Generation, Mode::Verification, Mode::Decision];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Generation => "generation",
            Self::Verification => "verification",
            Self::Decision => "decision",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidRequest(format!("unknown mode `{s}`")))
    }
}

/// Per-mode help shown next to the mode indicator.
pub fn help_text(mode: Mode) -> &'static str {
    match mode {
        Mode::Generation => {
            "Generation mode. Type a prompt and pick the providers to ask; each provider answers \
             the same prompt with the conversation so far as context. Responses are split into \
             claims right away. Save useful prompts as templates and bookmark responses worth \
             keeping. Switch to verification once at least one response exists."
        }
        Mode::Verification => {
            "Verification mode. Pick a response and run any of the checks. Source matches each \
             claim against your ingested research documents and cites the passages it found. \
             Double check searches the web: blue claims have supporting links, red claims had no \
             similar content and come with a suggested search, unhighlighted claims were judged \
             not worth checking. Compare asks several providers the same prompt and marks the \
             claims they agree on. Switch to decision once something has been verified."
        }
        Mode::Decision => {
            "Decision mode. Responses are ranked by how well they held up: those passing all three \
             checks come first, the rest follow by weighted coverage. The ranking is advice; choose \
             any row, write down why, then return to generation for the next question."
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderFailure {
    pub provider_id: String,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub session_id: String,
    pub index: usize,
    pub prompt_text: String,
    pub responses: Vec<GenerationResponse>,
    #[serde(default)]
    pub errors: Vec<ProviderFailure>,
    /// Claims per response id, segmented when the turn is created.
    pub claims: BTreeMap<String, Vec<Claim>>,
    pub created_at: DateTime<Utc>,
}

impl Turn {
    pub fn record_id(&self) -> String {
        format!("{}:{}", self.session_id, self.index)
    }

    pub fn claims_of(&self, response_id: &str) -> &[Claim] {
        self.claims.get(response_id).map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "report", rename_all = "snake_case")]
pub enum VerificationArtifact {
    Source(SourceVerification),
    DoubleCheck(DoubleCheckReport),
    Compare(CompareReport),
}

impl VerificationArtifact {
    pub fn criterion(&self) -> Criterion {
        match self {
            Self::Source(_) => Criterion::Source,
            Self::DoubleCheck(_) => Criterion::DoubleCheck,
            Self::Compare(_) => Criterion::Compare,
        }
    }

    /// `(response_id, coverage, passed)` for every response this artifact judged.
    pub fn outcomes(&self) -> Vec<(&str, f64, bool)> {
        match self {
            Self::Source(v) => vec![(v.response_id.as_str(), v.coverage, v.passed)],
            Self::DoubleCheck(r) => vec![(r.response_id.as_str(), r.coverage, r.passed)],
            Self::Compare(c) => c
                .per_response_coverage
                .iter()
                .map(|(id, cov)| {
                    (
                        id.as_str(),
                        *cov,
                        c.per_response_passed.get(id).copied().unwrap_or(false),
                    )
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    pub id: String,
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub artifact: VerificationArtifact,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub label: String,
    pub body: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bookmark {
    pub id: String,
    pub label: String,
    pub response_id: String,
    pub created_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Library {
    pub templates: Vec<PromptTemplate>,
    pub bookmarks: Vec<Bookmark>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub value: f64,
    pub unit: String,
    pub as_of: DateTime<Utc>,
}

/// Service metrics shown beside the prompt library; read-only to sessions.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricsPanel(pub BTreeMap<String, Metric>);

impl MetricsPanel {
    pub fn from_json(raw: &str) -> Result<Self> {
        serde_json::from_str(raw).map_err(|e| Error::InvalidConfig(format!("metrics: {e}")))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidConfig(format!("metrics {}: {e}", path.display())))?;
        Self::from_json(&raw)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub title: String,
    pub mode: Mode,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub library: Library,
    #[serde(default)]
    pub turns: Vec<Turn>,
    #[serde(default)]
    pub verifications: Vec<VerificationRecord>,
    #[serde(default)]
    pub decisions: Vec<DecisionRecord>,
}

/// The session row without its turns and artifacts, which are stored as
/// records of their own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionHeader {
    pub id: String,
    pub title: String,
    pub mode: Mode,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub library: Library,
}

impl Session {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            id: Uuid::new_v4().to_string(),
            title: title.into(),
            mode: Mode::Generation,
            created_at: Utc::now(),
            library: Library::default(),
            turns: Vec::new(),
            verifications: Vec::new(),
            decisions: Vec::new(),
        }
    }

    pub fn header(&self) -> SessionHeader {
        SessionHeader {
            id: self.id.clone(),
            title: self.title.clone(),
            mode: self.mode,
            created_at: self.created_at,
            library: self.library.clone(),
        }
    }

    pub fn from_parts(
        header: SessionHeader,
        mut turns: Vec<Turn>,
        verifications: Vec<VerificationRecord>,
        decisions: Vec<DecisionRecord>,
    ) -> Self {
        turns.sort_by_key(|t| t.index);
        Self {
            id: header.id,
            title: header.title,
            mode: header.mode,
            created_at: header.created_at,
            library: header.library,
            turns,
            verifications,
            decisions,
        }
    }

    pub fn responses(&self) -> impl Iterator<Item = &GenerationResponse> {
        self.turns.iter().flat_map(|t| t.responses.iter())
    }

    pub fn has_responses(&self) -> bool {
        self.responses().next().is_some()
    }

    pub fn find_response(&self, response_id: &str) -> Option<(&Turn, &GenerationResponse)> {
        self.turns
            .iter()
            .find_map(|t| t.responses.iter().find(|r| r.id == response_id).map(|r| (t, r)))
    }

    fn require_mode(&self, allowed: &[Mode], operation: &'static str) -> Result<()> {
        if allowed.contains(&self.mode) {
            Ok(())
        } else {
            Err(Error::WrongMode {
                current: self.mode,
                operation,
            })
        }
    }

    /// Modes reachable from the current state.
    pub fn allowed_targets(&self) -> Vec<Mode> {
        Mode::ALL
            .into_iter()
            .filter(|&m| self.check_transition(m).is_ok())
            .collect()
    }

    fn check_transition(&self, target: Mode) -> Result<()> {
        match target {
            Mode::Generation => Ok(()),
            Mode::Verification if !self.has_responses() => Err(Error::NoResponses),
            Mode::Decision if self.verifications.is_empty() => Err(Error::NoVerifications),
            _ => Ok(()),
        }
    }

    pub fn switch_mode(&mut self, target: Mode) -> Result<()> {
        self.check_transition(target)?;
        self.mode = target;
        Ok(())
    }

    /// Prior prompts with the first successful response of each turn.
    pub fn history(&self) -> Vec<HistoryTurn> {
        self.turns
            .iter()
            .map(|t| HistoryTurn {
                prompt: t.prompt_text.clone(),
                response: t.responses.first().map(|r| r.text.clone()),
            })
            .collect()
    }

    fn generate_turn(
        &self,
        registry: &ProviderRegistry,
        lexicon: &Lexicon,
        prompt: &str,
        provider_ids: &[String],
    ) -> Result<Turn> {
        let entries = registry.fan_out_with_history(prompt, &self.history(), provider_ids)?;
        let mut responses = Vec::new();
        let mut errors = Vec::new();
        for entry in entries {
            match entry.outcome {
                Ok(resp) => responses.push(resp),
                Err(e) => errors.push(ProviderFailure {
                    provider_id: entry.provider_id,
                    code: e.code().to_owned(),
                    message: e.to_string(),
                }),
            }
        }
        let claims = responses
            .iter()
            .map(|r| (r.id.clone(), lexicon.segment_claims(&r.id, &r.text)))
            .collect();
        Ok(Turn {
            session_id: self.id.clone(),
            index: self.turns.len(),
            prompt_text: prompt.to_owned(),
            responses,
            errors,
            claims,
            created_at: Utc::now(),
        })
    }

    /// Ask every provider in `provider_ids` and append the outcome as a new turn.
    pub fn submit_prompt(
        &mut self,
        registry: &ProviderRegistry,
        lexicon: &Lexicon,
        prompt: &str,
        provider_ids: &[String],
    ) -> Result<&Turn> {
        self.require_mode(&[Mode::Generation], "submit_prompt")?;
        let turn = self.generate_turn(registry, lexicon, prompt, provider_ids)?;
        if turn.responses.is_empty() {
            let detail = turn
                .errors
                .iter()
                .map(|e| e.message.as_str())
                .collect::<Vec<_>>()
                .join("; ");
            return Err(Error::GenerationFailed(detail));
        }
        self.turns.push(turn);
        Ok(self.turns.last().expect("just pushed"))
    }

    fn push_verification(&mut self, artifact: VerificationArtifact) -> &VerificationRecord {
        self.verifications.push(VerificationRecord {
            id: Uuid::new_v4().to_string(),
            session_id: self.id.clone(),
            created_at: Utc::now(),
            artifact,
        });
        self.verifications.last().expect("just pushed")
    }

    fn claims_for(&self, response_id: &str) -> Result<Vec<Claim>> {
        let (turn, _) = self
            .find_response(response_id)
            .ok_or_else(|| Error::UnknownResponse(response_id.to_owned()))?;
        Ok(turn.claims_of(response_id).to_vec())
    }

    pub fn verify_source(
        &mut self,
        index: &CorpusIndex,
        response_id: &str,
        config: &SourceConfig,
    ) -> Result<&VerificationRecord> {
        self.require_mode(&[Mode::Verification], "verify_source")?;
        let claims = self.claims_for(response_id)?;
        let report = source::verify_source(index, response_id, &claims, config)?;
        Ok(self.push_verification(VerificationArtifact::Source(report)))
    }

    pub fn double_check(
        &mut self,
        client: &dyn SearchClient,
        response_id: &str,
        config: &DoubleCheckConfig,
    ) -> Result<&VerificationRecord> {
        self.require_mode(&[Mode::Verification], "double_check")?;
        let claims = self.claims_for(response_id)?;
        let report = double_check::double_check(client, response_id, &claims, config);
        Ok(self.push_verification(VerificationArtifact::DoubleCheck(report)))
    }

    /// Send one prompt to several providers, keep the answers as a new turn
    /// and record how much of each answer the others agree with.
    pub fn run_compare(
        &mut self,
        registry: &ProviderRegistry,
        lexicon: &Lexicon,
        prompt: &str,
        provider_ids: &[String],
        config: &CompareConfig,
    ) -> Result<&VerificationRecord> {
        self.require_mode(&[Mode::Generation, Mode::Verification], "run_compare")?;
        let distinct: BTreeSet<&String> = provider_ids.iter().collect();
        if distinct.len() < 2 {
            return Err(CompareError::TooFewProviders(distinct.len()).into());
        }
        let turn = self.generate_turn(registry, lexicon, prompt, provider_ids)?;
        let report = compare_turn_report(&turn, config)?;
        self.turns.push(turn);
        Ok(self.push_verification(VerificationArtifact::Compare(report)))
    }

    /// Compare the responses an existing turn already holds.
    pub fn compare_turn(&mut self, turn_index: usize, config: &CompareConfig) -> Result<&VerificationRecord> {
        self.require_mode(&[Mode::Generation, Mode::Verification], "run_compare")?;
        let turn = self.turns.get(turn_index).ok_or(Error::UnknownTurn(turn_index))?;
        let distinct: BTreeSet<&str> = turn
            .responses
            .iter()
            .map(|r| r.provider_id.as_str())
            .chain(turn.errors.iter().map(|e| e.provider_id.as_str()))
            .collect();
        if distinct.len() < 2 {
            return Err(CompareError::TooFewProviders(distinct.len()).into());
        }
        let report = compare_turn_report(turn, config)?;
        Ok(self.push_verification(VerificationArtifact::Compare(report)))
    }

    /// Latest result per (response, criterion) for every response in the session.
    pub fn candidates(&self) -> Vec<Candidate<f64>> {
        let mut latest: BTreeMap<(&str, Criterion), CriterionResult<f64>> = BTreeMap::new();
        for record in &self.verifications {
            let criterion = record.artifact.criterion();
            for (response_id, coverage, passed) in record.artifact.outcomes() {
                latest.insert(
                    (response_id, criterion),
                    CriterionResult::evaluated(criterion, coverage, passed),
                );
            }
        }
        self.responses()
            .map(|r| Candidate {
                response_id: r.id.clone(),
                provider_id: r.provider_id.clone(),
                results: Criterion::ALL
                    .iter()
                    .filter_map(|&c| latest.get(&(r.id.as_str(), c)).copied())
                    .collect(),
            })
            .collect()
    }

    /// Rank every response that has at least one verification. The table is
    /// a pure function of the session state, `generated_at` included.
    pub fn decision_table(&self, weights: &Weights<f64>) -> Result<DecisionTable> {
        let generated_at = self
            .verifications
            .iter()
            .map(|v| v.created_at)
            .max()
            .ok_or(Error::NoVerifications)?;
        let rows = decision::rank_candidates(&self.candidates(), weights)?;
        Ok(DecisionTable {
            session_id: self.id.clone(),
            rows,
            generated_at,
        })
    }

    pub fn record_decision(
        &mut self,
        response_id: &str,
        rationale: &str,
        weights: &Weights<f64>,
    ) -> Result<&DecisionRecord> {
        self.require_mode(&[Mode::Decision], "record_decision")?;
        let table = self.decision_table(weights)?;
        if table.row(response_id).is_none() {
            return Err(decision::DecisionError::NotInTable(response_id.to_owned()).into());
        }
        self.decisions.push(DecisionRecord {
            id: Uuid::new_v4().to_string(),
            session_id: self.id.clone(),
            chosen_response_id: response_id.to_owned(),
            rationale: rationale.to_owned(),
            decided_at: Utc::now(),
        });
        Ok(self.decisions.last().expect("just pushed"))
    }

    pub fn add_template(&mut self, label: &str, body: &str) -> &PromptTemplate {
        self.library.templates.push(PromptTemplate {
            id: Uuid::new_v4().to_string(),
            label: label.to_owned(),
            body: body.to_owned(),
            created_at: Utc::now(),
        });
        self.library.templates.last().expect("just pushed")
    }

    pub fn add_bookmark(&mut self, label: &str, response_id: &str) -> Result<&Bookmark> {
        if self.find_response(response_id).is_none() {
            return Err(Error::UnknownResponse(response_id.to_owned()));
        }
        self.library.bookmarks.push(Bookmark {
            id: Uuid::new_v4().to_string(),
            label: label.to_owned(),
            response_id: response_id.to_owned(),
            created_at: Utc::now(),
        });
        Ok(self.library.bookmarks.last().expect("just pushed"))
    }

    /// Remove a template or bookmark by id.
    pub fn remove_library_item(&mut self, item_id: &str) -> Result<()> {
        let lib = &mut self.library;
        let before = lib.templates.len() + lib.bookmarks.len();
        lib.templates.retain(|t| t.id != item_id);
        lib.bookmarks.retain(|b| b.id != item_id);
        if lib.templates.len() + lib.bookmarks.len() == before {
            return Err(Error::UnknownLibraryItem(item_id.to_owned()));
        }
        Ok(())
    }
}

fn compare_turn_report(turn: &Turn, config: &CompareConfig) -> Result<CompareReport> {
    let groups: Vec<ProviderClaims> = turn
        .responses
        .iter()
        .map(|r| ProviderClaims {
            provider_id: r.provider_id.clone(),
            response_id: r.id.clone(),
            claims: turn.claims_of(&r.id).to_vec(),
        })
        .collect();
    let mut report = compare::compare_responses(&turn.prompt_text, &groups, config)?;
    report.failures = turn
        .errors
        .iter()
        .map(|e| (e.provider_id.clone(), e.message.clone()))
        .collect();
    Ok(report)
}
