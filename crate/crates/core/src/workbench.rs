//! Ties providers, search, corpus, sessions, scorecard and storage together.
//!
//! Every operation on a session runs under that session's lock on a copy of
//! the session; the copy replaces the original only once its new records are
//! on disk.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::compare::CompareConfig;
use crate::decision::{DecisionRecord, Weights};
use crate::double_check::{DoubleCheckConfig, SearchClient};
use crate::error::{Error, Result};
use crate::gateway::{ProviderRegistry, ProviderSpec};
use crate::scorecard::{Scorecard, ScorecardEntry, TrustDelta, TrustReport};
use crate::session::{Library, MetricsPanel, Mode, Session, SessionHeader, Turn, VerificationRecord};
use crate::source::{ChunkingConfig, CorpusDocument, CorpusIndex, SourceConfig, SourceError};
use crate::store::{RecordKind, SessionArchive, Store, StoreRecord};
use crate::text::{self, Lexicon};
use crate::DecisionTable;

/// Verification thresholds, chunking and ranking weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerificationSettings {
    pub source: SourceConfig,
    pub double_check: DoubleCheckConfig,
    pub compare: CompareConfig,
    pub chunking: ChunkingConfig,
    pub weights: Weights<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub title: String,
    pub mode: Mode,
    pub created_at: DateTime<Utc>,
    pub turns: usize,
    pub verifications: usize,
    pub decisions: usize,
}

impl From<&Session> for SessionSummary {
    fn from(s: &Session) -> Self {
        Self {
            id: s.id.clone(),
            title: s.title.clone(),
            mode: s.mode,
            created_at: s.created_at,
            turns: s.turns.len(),
            verifications: s.verifications.len(),
            decisions: s.decisions.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub current: Mode,
    pub allowed_targets: Vec<Mode>,
}

impl From<&Session> for ModeState {
    fn from(s: &Session) -> Self {
        Self {
            current: s.mode,
            allowed_targets: s.allowed_targets(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub documents: usize,
    pub chunks: usize,
}

/// Records a session operation added, beyond the session header.
enum Appended {
    Nothing,
    Turn,
    Verification,
    TurnAndVerification,
    Decision,
}

pub struct Workbench {
    registry: ProviderRegistry,
    search: Arc<dyn SearchClient>,
    lexicon: Lexicon,
    settings: VerificationSettings,
    metrics: MetricsPanel,
    store: Mutex<Store>,
    corpus: RwLock<CorpusIndex>,
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Session>>>>,
    scorecard: RwLock<Scorecard>,
}

impl std::fmt::Debug for Workbench {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Workbench")
            .field("registry", &self.registry)
            .field("settings", &self.settings)
            .finish_non_exhaustive()
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl Workbench {
    /// Load every session, corpus document and scorecard entry from `store`.
    pub fn open(
        store: Store,
        registry: ProviderRegistry,
        search: Arc<dyn SearchClient>,
        settings: VerificationSettings,
    ) -> Result<Self> {
        settings.weights.validate()?;
        let mut corpus = CorpusIndex::new(settings.chunking)?;
        for record in store.list(RecordKind::CorpusDoc) {
            corpus.ingest_document(record.decode()?)?;
        }
        let mut scorecard = Scorecard::new();
        for record in store.list(RecordKind::Scorecard) {
            scorecard.record_entry(record.decode()?)?;
        }
        let mut sessions = BTreeMap::new();
        for session in load_sessions(&store)? {
            sessions.insert(session.id.clone(), Arc::new(Mutex::new(session)));
        }
        Ok(Self {
            registry,
            search,
            lexicon: Lexicon::default(),
            settings,
            metrics: MetricsPanel::default(),
            store: Mutex::new(store),
            corpus: RwLock::new(corpus),
            sessions: RwLock::new(sessions),
            scorecard: RwLock::new(scorecard),
        })
    }

    pub fn with_metrics(mut self, metrics: MetricsPanel) -> Self {
        self.metrics = metrics;
        self
    }

    pub fn with_lexicon(mut self, lexicon: Lexicon) -> Self {
        self.lexicon = lexicon;
        self
    }

    pub fn settings(&self) -> &VerificationSettings {
        &self.settings
    }

    pub fn registry(&self) -> &ProviderRegistry {
        &self.registry
    }

    pub fn providers(&self) -> Vec<ProviderSpec> {
        self.registry.specs()
    }

    pub fn metrics(&self) -> &MetricsPanel {
        &self.metrics
    }

    fn handle(&self, session_id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .read()
            .expect("session map poisoned")
            .get(session_id)
            .cloned()
            .ok_or_else(|| Error::SessionNotFound(session_id.to_owned()))
    }

    fn persist(&self, session: &Session, appended: Appended) -> Result<()> {
        let mut records = Vec::with_capacity(3);
        let last_turn = || {
            session
                .turns
                .last()
                .map(|t| StoreRecord::new(RecordKind::Turn, t.record_id(), t))
        };
        let last_verification = || {
            session
                .verifications
                .last()
                .map(|v| StoreRecord::new(RecordKind::Verification, v.id.clone(), v))
        };
        match appended {
            Appended::Nothing => {}
            Appended::Turn => records.extend(last_turn()),
            Appended::Verification => records.extend(last_verification()),
            Appended::TurnAndVerification => {
                records.extend(last_turn());
                records.extend(last_verification());
            }
            Appended::Decision => records.extend(
                session
                    .decisions
                    .last()
                    .map(|d| StoreRecord::new(RecordKind::Decision, d.id.clone(), d)),
            ),
        }
        records.push(StoreRecord::new(
            RecordKind::Session,
            session.id.clone(),
            &session.header(),
        ));
        let records = records.into_iter().collect::<Result<Vec<_>, _>>()?;
        lock(&self.store).save_all(records)?;
        Ok(())
    }

    /// Run `op` on a copy of the session and commit the copy once persisted.
    fn mutate<R>(&self, session_id: &str, op: impl FnOnce(&mut Session) -> Result<(R, Appended)>) -> Result<R> {
        let handle = self.handle(session_id)?;
        let mut guard = lock(&handle);
        let mut draft = guard.clone();
        let (out, appended) = op(&mut draft)?;
        self.persist(&draft, appended)?;
        *guard = draft;
        Ok(out)
    }

    fn read<R>(&self, session_id: &str, f: impl FnOnce(&Session) -> Result<R>) -> Result<R> {
        let handle = self.handle(session_id)?;
        let guard = lock(&handle);
        f(&guard)
    }

    pub fn create_session(&self, title: &str) -> Result<Session> {
        let session = Session::new(title);
        self.persist(&session, Appended::Nothing)?;
        self.sessions
            .write()
            .expect("session map poisoned")
            .insert(session.id.clone(), Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }

    pub fn list_sessions(&self) -> Vec<SessionSummary> {
        let handles: Vec<_> = self
            .sessions
            .read()
            .expect("session map poisoned")
            .values()
            .cloned()
            .collect();
        let mut out: Vec<SessionSummary> = handles.iter().map(|h| SessionSummary::from(&*lock(h))).collect();
        out.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
        out
    }

    pub fn session(&self, session_id: &str) -> Result<Session> {
        self.read(session_id, |s| Ok(s.clone()))
    }

    pub fn turn(&self, session_id: &str, index: usize) -> Result<Turn> {
        self.read(session_id, |s| {
            s.turns.get(index).cloned().ok_or(Error::UnknownTurn(index))
        })
    }

    pub fn mode_state(&self, session_id: &str) -> Result<ModeState> {
        self.read(session_id, |s| Ok(ModeState::from(s)))
    }

    pub fn switch_mode(&self, session_id: &str, target: Mode) -> Result<ModeState> {
        self.mutate(session_id, |s| {
            s.switch_mode(target)?;
            Ok((ModeState::from(&*s), Appended::Nothing))
        })
    }

    pub fn submit_prompt(&self, session_id: &str, prompt: &str, provider_ids: &[String]) -> Result<Turn> {
        self.mutate(session_id, |s| {
            let turn = s
                .submit_prompt(&self.registry, &self.lexicon, prompt, provider_ids)?
                .clone();
            Ok((turn, Appended::Turn))
        })
    }

    pub fn verify_source(&self, session_id: &str, response_id: &str) -> Result<VerificationRecord> {
        self.mutate(session_id, |s| {
            let index = self.corpus.read().expect("corpus poisoned");
            let rec = s.verify_source(&index, response_id, &self.settings.source)?.clone();
            Ok((rec, Appended::Verification))
        })
    }

    pub fn double_check(&self, session_id: &str, response_id: &str) -> Result<VerificationRecord> {
        self.mutate(session_id, |s| {
            let rec = s
                .double_check(self.search.as_ref(), response_id, &self.settings.double_check)?
                .clone();
            Ok((rec, Appended::Verification))
        })
    }

    pub fn run_compare(
        &self,
        session_id: &str,
        prompt: &str,
        provider_ids: &[String],
    ) -> Result<(Turn, VerificationRecord)> {
        self.mutate(session_id, |s| {
            let rec = s
                .run_compare(
                    &self.registry,
                    &self.lexicon,
                    prompt,
                    provider_ids,
                    &self.settings.compare,
                )?
                .clone();
            let turn = s.turns.last().expect("compare appends a turn").clone();
            Ok(((turn, rec), Appended::TurnAndVerification))
        })
    }

    pub fn compare_turn(&self, session_id: &str, turn_index: usize) -> Result<VerificationRecord> {
        self.mutate(session_id, |s| {
            let rec = s.compare_turn(turn_index, &self.settings.compare)?.clone();
            Ok((rec, Appended::Verification))
        })
    }

    pub fn decision_table(&self, session_id: &str) -> Result<DecisionTable> {
        self.read(session_id, |s| s.decision_table(&self.settings.weights))
    }

    pub fn record_decision(&self, session_id: &str, response_id: &str, rationale: &str) -> Result<DecisionRecord> {
        self.mutate(session_id, |s| {
            let rec = s
                .record_decision(response_id, rationale, &self.settings.weights)?
                .clone();
            Ok((rec, Appended::Decision))
        })
    }

    pub fn library(&self, session_id: &str) -> Result<Library> {
        self.read(session_id, |s| Ok(s.library.clone()))
    }

    pub fn add_template(&self, session_id: &str, label: &str, body: &str) -> Result<Library> {
        self.mutate(session_id, |s| {
            s.add_template(label, body);
            Ok((s.library.clone(), Appended::Nothing))
        })
    }

    pub fn add_bookmark(&self, session_id: &str, label: &str, response_id: &str) -> Result<Library> {
        self.mutate(session_id, |s| {
            s.add_bookmark(label, response_id)?;
            Ok((s.library.clone(), Appended::Nothing))
        })
    }

    pub fn remove_library_item(&self, session_id: &str, item_id: &str) -> Result<Library> {
        self.mutate(session_id, |s| {
            s.remove_library_item(item_id)?;
            Ok((s.library.clone(), Appended::Nothing))
        })
    }

    /// Index a document and persist it; returns its chunk count.
    pub fn ingest_document(&self, doc: CorpusDocument) -> Result<usize> {
        let mut index = self.corpus.write().expect("corpus poisoned");
        if index.document(&doc.doc_id).is_some() {
            return Err(SourceError::DuplicateDocument(doc.doc_id).into());
        }
        if text::tokenize(&doc.body).is_empty() {
            return Err(SourceError::EmptyDocument(doc.doc_id).into());
        }
        let record = StoreRecord::new(RecordKind::CorpusDoc, doc.doc_id.clone(), &doc)?;
        lock(&self.store).save(record)?;
        Ok(index.ingest_document(doc)?)
    }

    pub fn corpus_summary(&self) -> CorpusSummary {
        let index = self.corpus.read().expect("corpus poisoned");
        CorpusSummary {
            documents: index.documents().count(),
            chunks: index.chunk_count(),
        }
    }

    pub fn record_scorecard(&self, entry: ScorecardEntry) -> Result<ScorecardEntry> {
        let mut card = self.scorecard.write().expect("scorecard poisoned");
        entry.validate()?;
        if card
            .entries()
            .any(|e| e.rater_id == entry.rater_id && e.tool_id == entry.tool_id)
        {
            return Err(crate::scorecard::ScorecardError::DuplicateEntry {
                rater_id: entry.rater_id,
                tool_id: entry.tool_id,
            }
            .into());
        }
        let record = StoreRecord::new(RecordKind::Scorecard, entry.record_id(), &entry)?;
        lock(&self.store).save(record)?;
        Ok(card.record_entry(entry)?.clone())
    }

    pub fn scorecard_entries(&self) -> Vec<ScorecardEntry> {
        self.scorecard
            .read()
            .expect("scorecard poisoned")
            .entries()
            .cloned()
            .collect()
    }

    pub fn aggregate_scorecard(&self, tool_id: &str) -> Result<TrustReport<f64>> {
        Ok(self.scorecard.read().expect("scorecard poisoned").aggregate(tool_id)?)
    }

    pub fn compare_tools(&self, tool_a: &str, tool_b: &str) -> Result<TrustDelta<f64>> {
        Ok(self
            .scorecard
            .read()
            .expect("scorecard poisoned")
            .compare_tools(tool_a, tool_b)?)
    }

    pub fn export_session(&self, session_id: &str) -> Result<SessionArchive> {
        // hold the session lock so the archive is a consistent snapshot
        let handle = self.handle(session_id)?;
        let _guard = lock(&handle);
        Ok(lock(&self.store).export_session(session_id)?)
    }

    pub fn import_archive(&self, archive: &SessionArchive) -> Result<Session> {
        let mut sessions = self.sessions.write().expect("session map poisoned");
        let session_id = {
            let mut store = lock(&self.store);
            store.import_archive(archive)?
        };
        let session = session_from_records(archive.records.iter())?
            .into_iter()
            .find(|s| s.id == session_id)
            .ok_or_else(|| Error::InvalidRequest("archive holds no session".into()))?;
        sessions.insert(session_id, Arc::new(Mutex::new(session.clone())));
        Ok(session)
    }
}

fn load_sessions(store: &Store) -> Result<Vec<Session>> {
    session_from_records(RecordKind::SESSION_SCOPED.iter().flat_map(|k| store.list(*k)))
}

fn session_from_records<'a>(records: impl Iterator<Item = &'a StoreRecord>) -> Result<Vec<Session>> {
    #[derive(Default)]
    struct Parts {
        header: Option<SessionHeader>,
        turns: Vec<Turn>,
        verifications: Vec<VerificationRecord>,
        decisions: Vec<DecisionRecord>,
    }
    let mut parts: BTreeMap<String, Parts> = BTreeMap::new();
    for record in records {
        let Some(sid) = record.session_id() else { continue };
        let entry = parts.entry(sid.to_owned()).or_default();
        match record.kind {
            RecordKind::Session => entry.header = Some(record.decode()?),
            RecordKind::Turn => entry.turns.push(record.decode()?),
            RecordKind::Verification => entry.verifications.push(record.decode()?),
            RecordKind::Decision => entry.decisions.push(record.decode()?),
            RecordKind::Scorecard | RecordKind::CorpusDoc => {}
        }
    }
    let mut sessions: Vec<Session> = parts
        .into_values()
        .filter_map(|p| {
            p.header
                .map(|h| Session::from_parts(h, p.turns, p.verifications, p.decisions))
        })
        .collect();
    sessions.sort_by(|a, b| a.created_at.cmp(&b.created_at).then_with(|| a.id.cmp(&b.id)));
    Ok(sessions)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::double_check::FixtureSearch;
    use crate::gateway::{MockFixture, MockProvider};

    fn workbench(dir: &std::path::Path) -> Workbench {
        let reg = ProviderRegistry::default();
        let fixture = MockFixture::new().with(
            "*",
            vec!["Rows of similar thumbnails make browsing feel endless.".into()],
        );
        for id in ["a", "b"] {
            reg.register(Arc::new(MockProvider::new(ProviderSpec::mock(id), fixture.clone())))
                .unwrap();
        }
        let search = Arc::new(FixtureSearch::default());
        Workbench::open(Store::open(dir).unwrap(), reg, search, VerificationSettings::default()).unwrap()
    }

    #[test]
    fn state_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let (sid, before) = {
            let wb = workbench(dir.path());
            let s = wb.create_session("netflix").unwrap();
            wb.submit_prompt(&s.id, "What is wrong with browsing?", &["a".into(), "b".into()])
                .unwrap();
            wb.ingest_document(CorpusDocument::new(
                "d1",
                "study",
                "Rows of similar thumbnails make browsing feel endless.",
            ))
            .unwrap();
            wb.switch_mode(&s.id, Mode::Verification).unwrap();
            let rid = wb.turn(&s.id, 0).unwrap().responses[0].id.clone();
            let v = wb.verify_source(&s.id, &rid).unwrap();
            assert!(matches!(&v.artifact, crate::session::VerificationArtifact::Source(r) if r.coverage == 1.0));
            wb.compare_turn(&s.id, 0).unwrap();
            wb.switch_mode(&s.id, Mode::Decision).unwrap();
            wb.record_decision(&s.id, &rid, "cited and agreed").unwrap();
            (s.id.clone(), wb.session(&s.id).unwrap())
        };
        let wb = workbench(dir.path());
        assert_eq!(wb.session(&sid).unwrap(), before);
        assert_eq!(wb.corpus_summary().documents, 1);
        assert_eq!(wb.list_sessions().len(), 1);
    }

    #[test]
    fn failed_operations_leave_state_untouched() {
        let dir = tempfile::tempdir().unwrap();
        let wb = workbench(dir.path());
        let s = wb.create_session("t").unwrap();
        assert_eq!(
            wb.switch_mode(&s.id, Mode::Verification).unwrap_err().code(),
            "NoResponses"
        );
        assert_eq!(wb.decision_table(&s.id).unwrap_err().code(), "NoVerifications");
        assert_eq!(wb.session("nope").unwrap_err().code(), "SessionNotFound");
        assert_eq!(wb.session(&s.id).unwrap(), s);
    }

    #[test]
    fn export_import_between_workspaces() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let wa = workbench(a.path());
        let s = wa.create_session("t").unwrap();
        wa.submit_prompt(&s.id, "Why?", &["a".into(), "b".into()]).unwrap();
        wa.compare_turn(&s.id, 0).unwrap();
        let archive = wa.export_session(&s.id).unwrap();
        let wb = workbench(b.path());
        let imported = wb.import_archive(&archive).unwrap();
        assert_eq!(imported, wa.session(&s.id).unwrap());
        assert_eq!(wb.import_archive(&archive).unwrap_err().code(), "SessionExists");
    }

    #[test]
    fn duplicate_document_is_not_persisted_twice() {
        let dir = tempfile::tempdir().unwrap();
        let wb = workbench(dir.path());
        wb.ingest_document(CorpusDocument::new("d", "t", "body text here"))
            .unwrap();
        assert_eq!(
            wb.ingest_document(CorpusDocument::new("d", "t", "again"))
                .unwrap_err()
                .code(),
            "DuplicateDocument"
        );
        assert_eq!(
            wb.ingest_document(CorpusDocument::new("e", "t", " ... "))
                .unwrap_err()
                .code(),
            "EmptyDocument"
        );
        assert_eq!(lock(&wb.store).count(RecordKind::CorpusDoc), 1);
    }
}
