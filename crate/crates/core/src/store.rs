//! Workspace storage: one append-only JSON-lines file per record kind.
//!
//! Layout of a workspace directory:
//!
//! ```text
//! .lock                  advisory single-writer lock
//! session.jsonl          session headers (title, mode, library)
//! turn.jsonl             turns, id "<session_id>:<index>"
//! verification.jsonl     source / double check / compare artifacts
//! decision.jsonl         decision records
//! scorecard.jsonl        scorecard entries, id "<tool_id>:<rater_id>"
//! corpus_doc.jsonl       ingested corpus documents
//! ```
//!
//! Saving a record appends one line and syncs it; the latest line for a
//! (kind, id) wins. A torn final line left by a crash is dropped on open.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions, TryLockError};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use indexmap::IndexMap;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
pub const ARCHIVE_FORMAT_VERSION: u32 = 1;

const MANIFEST_NAME: &str = "manifest.json";
const RECORDS_NAME: &str = "records.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("no {kind} record with id `{id}`")]
    NotFound { kind: RecordKind, id: String },
    #[error("unsupported version: {0}")]
    VersionUnsupported(String),
    #[error("corrupt archive: {0}")]
    CorruptArchive(String),
    #[error("workspace {0} is locked by another process")]
    WorkspaceLocked(PathBuf),
    #[error("session `{0}` already exists in this workspace")]
    SessionExists(String),
    #[error("workspace was opened read-only")]
    ReadOnly,
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::NotFound { .. } => "NotFound",
            Self::VersionUnsupported(_) => "VersionUnsupported",
            Self::CorruptArchive(_) => "CorruptArchive",
            Self::WorkspaceLocked(_) => "WorkspaceLocked",
            Self::SessionExists(_) => "SessionExists",
            Self::ReadOnly => "ReadOnly",
            Self::InvalidRecord(_) => "InvalidRecord",
            Self::Io(_) => "IoError",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Session,
    Turn,
    Verification,
    Decision,
    Scorecard,
    CorpusDoc,
}

impl RecordKind {
    pub const ALL: [RecordKind; 6] = [
        RecordKind::Session,
        RecordKind::Turn,
        RecordKind::Verification,
        RecordKind::Decision,
        RecordKind::Scorecard,
        RecordKind::CorpusDoc,
    ];

    /// Kinds that belong to a session and travel in its archive.
    pub const SESSION_SCOPED: [RecordKind; 4] = [
        RecordKind::Session,
        RecordKind::Turn,
        RecordKind::Verification,
        RecordKind::Decision,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Session => "session",
            Self::Turn => "turn",
            Self::Verification => "verification",
            Self::Decision => "decision",
            Self::Scorecard => "scorecard",
            Self::CorpusDoc => "corpus_doc",
        }
    }

    fn file_name(self) -> String {
        format!("{}.jsonl", self.as_str())
    }
}

impl std::fmt::Display for RecordKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreRecord {
    pub kind: RecordKind,
    pub id: String,
    pub schema_version: u32,
    pub payload: Value,
}

impl StoreRecord {
    pub fn new<T: Serialize>(kind: RecordKind, id: impl Into<String>, payload: &T) -> Result<Self, StoreError> {
        Ok(Self {
            kind,
            id: id.into(),
            schema_version: SCHEMA_VERSION,
            payload: serde_json::to_value(payload).map_err(|e| StoreError::InvalidRecord(e.to_string()))?,
        })
    }

    pub fn decode<T: DeserializeOwned>(&self) -> Result<T, StoreError> {
        T::deserialize(&self.payload)
            .map_err(|e| StoreError::InvalidRecord(format!("{} `{}`: {e}", self.kind, self.id)))
    }

    /// The `session_id` field of the payload, or the id itself for sessions.
    pub fn session_id(&self) -> Option<&str> {
        match self.kind {
            RecordKind::Session => Some(self.id.as_str()),
            _ => self.payload.get("session_id").and_then(Value::as_str),
        }
    }

    fn check(&self) -> Result<(), StoreError> {
        if self.schema_version == 0 || self.schema_version > SCHEMA_VERSION {
            return Err(StoreError::VersionUnsupported(format!(
                "{} `{}` has schema_version {}, this build reads 1..={SCHEMA_VERSION}",
                self.kind, self.id, self.schema_version
            )));
        }
        if self.id.is_empty() {
            return Err(StoreError::InvalidRecord(format!("{} record with empty id", self.kind)));
        }
        Ok(())
    }
}

type KindTable = IndexMap<String, StoreRecord>;

#[derive(Debug)]
pub struct Store {
    root: PathBuf,
    tables: BTreeMap<RecordKind, KindTable>,
    /// Append handles; `None` for read-only stores.
    writers: Option<BTreeMap<RecordKind, File>>,
    _lock: Option<File>,
}

impl Store {
    /// Open (creating if needed) a workspace for writing. Fails with
    /// `WorkspaceLocked` while another writer holds it.
    pub fn open(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        fs::create_dir_all(&root)?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(root.join(".lock"))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(TryLockError::WouldBlock) => return Err(StoreError::WorkspaceLocked(root)),
            Err(TryLockError::Error(e)) => return Err(e.into()),
        }
        let mut tables = BTreeMap::new();
        let mut writers = BTreeMap::new();
        for kind in RecordKind::ALL {
            let path = root.join(kind.file_name());
            let (table, good_len) = read_table(&path, kind)?;
            let file = OpenOptions::new().create(true).read(true).append(true).open(&path)?;
            if file.metadata()?.len() > good_len {
                file.set_len(good_len)?;
                file.sync_all()?;
            }
            tables.insert(kind, table);
            writers.insert(kind, file);
        }
        Ok(Self {
            root,
            tables,
            writers: Some(writers),
            _lock: Some(lock),
        })
    }

    /// Open without taking the writer lock. Torn tails are ignored, not repaired.
    pub fn open_read_only(root: impl AsRef<Path>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        let mut tables = BTreeMap::new();
        for kind in RecordKind::ALL {
            let (table, _) = read_table(&root.join(kind.file_name()), kind)?;
            tables.insert(kind, table);
        }
        Ok(Self {
            root,
            tables,
            writers: None,
            _lock: None,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn is_read_only(&self) -> bool {
        self.writers.is_none()
    }

    pub fn save(&mut self, record: StoreRecord) -> Result<(), StoreError> {
        record.check()?;
        let writers = self.writers.as_mut().ok_or(StoreError::ReadOnly)?;
        let mut line = serde_json::to_vec(&record).map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
        line.push(b'\n');
        let file = writers.get_mut(&record.kind).expect("writer per kind");
        file.write_all(&line)?;
        file.sync_data()?;
        self.tables
            .get_mut(&record.kind)
            .expect("table per kind")
            .insert(record.id.clone(), record);
        Ok(())
    }

    pub fn save_all(&mut self, records: impl IntoIterator<Item = StoreRecord>) -> Result<(), StoreError> {
        for r in records {
            self.save(r)?;
        }
        Ok(())
    }

    pub fn load(&self, kind: RecordKind, id: &str) -> Result<&StoreRecord, StoreError> {
        self.tables[&kind].get(id).ok_or_else(|| StoreError::NotFound {
            kind,
            id: id.to_owned(),
        })
    }

    pub fn contains(&self, kind: RecordKind, id: &str) -> bool {
        self.tables[&kind].contains_key(id)
    }

    /// Records of one kind in first-saved order.
    pub fn list(&self, kind: RecordKind) -> impl Iterator<Item = &StoreRecord> {
        self.tables[&kind].values()
    }

    pub fn count(&self, kind: RecordKind) -> usize {
        self.tables[&kind].len()
    }

    /// Rewrite every file with only the latest record per id.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let writers = self.writers.as_mut().ok_or(StoreError::ReadOnly)?;
        for (kind, table) in &self.tables {
            let path = self.root.join(kind.file_name());
            let tmp = self.root.join(format!("{}.tmp", kind.file_name()));
            {
                let mut out = io::BufWriter::new(File::create(&tmp)?);
                for record in table.values() {
                    serde_json::to_writer(&mut out, record).map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
                    out.write_all(b"\n")?;
                }
                out.into_inner().map_err(|e| e.into_error())?.sync_all()?;
            }
            fs::rename(&tmp, &path)?;
            let file = OpenOptions::new().read(true).append(true).open(&path)?;
            writers.insert(*kind, file);
        }
        Ok(())
    }

    pub fn session_records(&self, session_id: &str) -> Vec<&StoreRecord> {
        RecordKind::SESSION_SCOPED
            .iter()
            .flat_map(|k| self.list(*k))
            .filter(|r| r.session_id() == Some(session_id))
            .collect()
    }

    pub fn export_session(&self, session_id: &str) -> Result<SessionArchive, StoreError> {
        self.load(RecordKind::Session, session_id)?;
        let records: Vec<StoreRecord> = self.session_records(session_id).into_iter().cloned().collect();
        Ok(SessionArchive::new(session_id, records))
    }

    /// Store every record of the archive under its original id.
    pub fn import_archive(&mut self, archive: &SessionArchive) -> Result<String, StoreError> {
        archive.validate()?;
        let session_id = archive.manifest.session_id.clone();
        if self.contains(RecordKind::Session, &session_id) {
            return Err(StoreError::SessionExists(session_id));
        }
        for record in &archive.records {
            record.check()?;
        }
        // the session header goes last so a half-finished import stays invisible
        let (header, rest): (Vec<_>, Vec<_>) = archive
            .records
            .iter()
            .cloned()
            .partition(|r| r.kind == RecordKind::Session);
        self.save_all(rest)?;
        self.save_all(header)?;
        Ok(session_id)
    }
}

/// Parse one kind file. Returns the table and the byte length of the
/// well-formed prefix.
fn read_table(path: &Path, kind: RecordKind) -> Result<(KindTable, u64), StoreError> {
    let mut table = KindTable::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok((table, 0)),
        Err(e) => return Err(e.into()),
    };
    let total = file.metadata()?.len();
    let mut reader = BufReader::new(file);
    let mut good = 0u64;
    let mut line = Vec::new();
    loop {
        line.clear();
        let n = reader.read_until(b'\n', &mut line)?;
        if n == 0 {
            break;
        }
        let complete = line.last() == Some(&b'\n');
        let parsed = serde_json::from_slice::<StoreRecord>(&line);
        match parsed {
            Ok(record) if complete => {
                if record.kind != kind {
                    return Err(StoreError::InvalidRecord(format!(
                        "{} holds a {} record",
                        path.display(),
                        record.kind
                    )));
                }
                record.check()?;
                good += n as u64;
                table.insert(record.id.clone(), record);
            }
            // torn tail: only acceptable as the very last line
            _ if good + n as u64 == total => break,
            Ok(_) => unreachable!("incomplete line is always the last one"),
            Err(e) => {
                return Err(StoreError::InvalidRecord(format!(
                    "{} at byte {good}: {e}",
                    path.display()
                )))
            }
        }
    }
    Ok((table, good))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveManifest {
    pub format_version: u32,
    pub schema_version: u32,
    pub session_id: String,
    pub created_at: DateTime<Utc>,
    pub record_counts: BTreeMap<RecordKind, usize>,
    pub total: usize,
}

/// A portable copy of one session: a gzip'd tar holding `manifest.json`
/// and `records.jsonl`.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionArchive {
    pub manifest: ArchiveManifest,
    pub records: Vec<StoreRecord>,
}

impl SessionArchive {
    pub fn new(session_id: &str, records: Vec<StoreRecord>) -> Self {
        let mut counts = BTreeMap::new();
        for r in &records {
            *counts.entry(r.kind).or_insert(0) += 1;
        }
        Self {
            manifest: ArchiveManifest {
                format_version: ARCHIVE_FORMAT_VERSION,
                schema_version: SCHEMA_VERSION,
                session_id: session_id.to_owned(),
                created_at: Utc::now(),
                record_counts: counts,
                total: records.len(),
            },
            records,
        }
    }

    pub fn validate(&self) -> Result<(), StoreError> {
        let m = &self.manifest;
        if m.format_version == 0 || m.format_version > ARCHIVE_FORMAT_VERSION {
            return Err(StoreError::VersionUnsupported(format!(
                "archive format {}",
                m.format_version
            )));
        }
        if m.schema_version == 0 || m.schema_version > SCHEMA_VERSION {
            return Err(StoreError::VersionUnsupported(format!(
                "archive schema {}",
                m.schema_version
            )));
        }
        if m.total != self.records.len() {
            return Err(StoreError::CorruptArchive(format!(
                "manifest lists {} records, archive holds {}",
                m.total,
                self.records.len()
            )));
        }
        let mut counts: BTreeMap<RecordKind, usize> = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.kind).or_insert(0) += 1;
        }
        let listed: BTreeMap<RecordKind, usize> = m
            .record_counts
            .iter()
            .filter(|(_, &n)| n > 0)
            .map(|(k, n)| (*k, *n))
            .collect();
        if counts != listed {
            return Err(StoreError::CorruptArchive(
                "per-kind record counts do not match the manifest".into(),
            ));
        }
        if !self
            .records
            .iter()
            .any(|r| r.kind == RecordKind::Session && r.id == m.session_id)
        {
            return Err(StoreError::CorruptArchive(format!(
                "no session record for `{}`",
                m.session_id
            )));
        }
        if let Some(stray) = self
            .records
            .iter()
            .find(|r| r.session_id() != Some(m.session_id.as_str()))
        {
            return Err(StoreError::CorruptArchive(format!(
                "{} `{}` belongs to another session",
                stray.kind, stray.id
            )));
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, writer: W) -> Result<(), StoreError> {
        let manifest =
            serde_json::to_vec_pretty(&self.manifest).map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
        let mut records = Vec::new();
        for r in &self.records {
            serde_json::to_writer(&mut records, r).map_err(|e| StoreError::InvalidRecord(e.to_string()))?;
            records.push(b'\n');
        }
        let mut tar = tar::Builder::new(GzEncoder::new(writer, Compression::default()));
        for (name, bytes) in [(MANIFEST_NAME, &manifest), (RECORDS_NAME, &records)] {
            let mut header = tar::Header::new_gnu();
            header.set_size(bytes.len() as u64);
            header.set_mode(0o644);
            header.set_mtime(self.manifest.created_at.timestamp().max(0) as u64);
            header.set_cksum();
            tar.append_data(&mut header, name, bytes.as_slice())?;
        }
        tar.into_inner()?.finish()?;
        Ok(())
    }

    pub fn read_from<R: Read>(reader: R) -> Result<Self, StoreError> {
        let corrupt = |e: &dyn std::fmt::Display| StoreError::CorruptArchive(e.to_string());
        let mut tar = tar::Archive::new(GzDecoder::new(reader));
        let mut manifest = None;
        let mut records = None;
        for entry in tar.entries().map_err(|e| corrupt(&e))? {
            let mut entry = entry.map_err(|e| corrupt(&e))?;
            let name = entry.path().map_err(|e| corrupt(&e))?.to_string_lossy().into_owned();
            let mut bytes = Vec::new();
            entry.read_to_end(&mut bytes).map_err(|e| corrupt(&e))?;
            match name.as_str() {
                MANIFEST_NAME => manifest = Some(bytes),
                RECORDS_NAME => records = Some(bytes),
                _ => {}
            }
        }
        let manifest: ArchiveManifest = serde_json::from_slice(
            &manifest.ok_or_else(|| StoreError::CorruptArchive("missing manifest.json".into()))?,
        )
        .map_err(|e| corrupt(&e))?;
        let records = records
            .ok_or_else(|| StoreError::CorruptArchive("missing records.jsonl".into()))?
            .split(|&b| b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| serde_json::from_slice::<StoreRecord>(l).map_err(|e| corrupt(&e)))
            .collect::<Result<Vec<_>, _>>()?;
        let archive = Self { manifest, records };
        archive.validate()?;
        Ok(archive)
    }

    pub fn write_file(&self, path: &Path) -> Result<(), StoreError> {
        let tmp = path.with_extension("partial");
        {
            let file = File::create(&tmp)?;
            self.write_to(io::BufWriter::new(&file))?;
            file.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Self, StoreError> {
        let mut file = File::open(path)?;
        file.seek(SeekFrom::Start(0))?;
        Self::read_from(BufReader::new(file))
    }
}
