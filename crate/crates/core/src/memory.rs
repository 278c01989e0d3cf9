//! Case memory: an append-only store of book-character passages and
//! expert-approved reader texts.
//!
//! Readers take cheap [`StoreSnapshot`]s and never see a half-applied
//! mutation. Writers are serialized. A store opened on a directory
//! journals every mutation to `cases.jsonl` and then commits it by
//! atomically replacing `manifest.json`, which records the committed
//! journal length and its SHA-256. Bytes past the committed length are an
//! uncommitted tail and are discarded when the store is reopened.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::review::{ReviewTicket, TicketId, TicketState};
use crate::text::{DocumentVector, Pipeline, RawText, TextError, TokenizedText};

pub const JOURNAL_FILE: &str = "cases.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT: &str = "bookcbr-store/1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("record {index}: missing or non-string key `{key}`")]
    SchemaError { index: usize, key: String },
    #[error("seed file is not a JSON array of objects: {0}")]
    NotAnArray(String),
    #[error("record {index}: invalid personality {value:?}")]
    InvalidPersonality { index: usize, value: String },
    #[error("record {index}: text is unusable: {source}")]
    InvalidText { index: usize, source: TextError },
    #[error("record {index}: duplicate of an existing (text, book_title) pair")]
    DuplicateRecord { index: usize },
    #[error("ticket {0} is not accepted or was already retained")]
    NotAccepted(TicketId),
    #[error("corrupt store: {0}")]
    CorruptStore(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CaseId(pub u64);

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One of the sixteen Myers-Briggs type codes, stored upper-case.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PersonalityLabel(String);

impl PersonalityLabel {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// All sixteen codes in I/E, N/S, T/F, J/P order.
    pub fn all() -> Vec<PersonalityLabel> {
        let mut out = Vec::with_capacity(16);
        for a in ['I', 'E'] {
            for b in ['N', 'S'] {
                for c in ['T', 'F'] {
                    for d in ['J', 'P'] {
                        out.push(PersonalityLabel([a, b, c, d].iter().collect()));
                    }
                }
            }
        }
        out
    }
}

impl FromStr for PersonalityLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let code = s.trim().to_ascii_uppercase();
        let axes = ["IE", "NS", "TF", "JP"];
        let valid = code.len() == 4
            && code
                .chars()
                .zip(axes)
                .all(|(c, allowed)| allowed.contains(c));
        if valid {
            Ok(Self(code))
        } else {
            Err(format!("{s:?} is not a Myers-Briggs type code"))
        }
    }
}

impl TryFrom<String> for PersonalityLabel {
    type Error = String;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<PersonalityLabel> for String {
    fn from(label: PersonalityLabel) -> Self {
        label.0
    }
}

impl fmt::Display for PersonalityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Seed,
    Retained,
}

/// The persisted part of a case, one journal line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case_id: CaseId,
    pub text: String,
    pub book_title: String,
    pub personality: PersonalityLabel,
    pub origin: Origin,
    pub created_at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ticket_id: Option<TicketId>,
    /// Store version whose commit added this case.
    pub version: u64,
}

/// A case plus its cached representations.
#[derive(Debug, Clone)]
pub struct Case {
    record: CaseRecord,
    tokenized: TokenizedText,
    vector: Option<DocumentVector>,
}

impl Case {
    fn derive(record: CaseRecord, pipeline: &Pipeline) -> Result<Self, TextError> {
        let raw = RawText::new(record.text.as_str(), record.case_id.to_string())?;
        let tokenized = pipeline.analyze(&raw)?;
        let vector = match pipeline.vectorize(&tokenized) {
            Some(Ok(v)) => Some(v),
            Some(Err(TextError::NoCoverage)) | None => None,
            Some(Err(e)) => return Err(e),
        };
        Ok(Self {
            record,
            tokenized,
            vector,
        })
    }

    pub fn id(&self) -> CaseId {
        self.record.case_id
    }

    pub fn text(&self) -> &str {
        &self.record.text
    }

    pub fn book_title(&self) -> &str {
        &self.record.book_title
    }

    pub fn personality(&self) -> &PersonalityLabel {
        &self.record.personality
    }

    pub fn origin(&self) -> Origin {
        self.record.origin
    }

    pub fn created_at(&self) -> DateTime<Utc> {
        self.record.created_at
    }

    /// The review ticket that admitted a retained case.
    pub fn ticket_id(&self) -> Option<TicketId> {
        self.record.ticket_id
    }

    pub fn tokenized(&self) -> &TokenizedText {
        &self.tokenized
    }

    /// `None` when no embedding table is configured or no token is covered.
    pub fn vector(&self) -> Option<&DocumentVector> {
        self.vector.as_ref()
    }

    pub fn record(&self) -> &CaseRecord {
        &self.record
    }
}

/// Seed-file record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub text: String,
    pub book_title: String,
    pub personality: String,
}

/// Immutable point-in-time view of the store.
#[derive(Debug, Clone, Default)]
pub struct StoreSnapshot {
    cases: Vec<Arc<Case>>,
    version: u64,
    keys: HashSet<(String, String)>,
    retained: HashMap<TicketId, CaseId>,
}

impl StoreSnapshot {
    pub fn cases(&self) -> &[Arc<Case>] {
        &self.cases
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, id: CaseId) -> Option<&Arc<Case>> {
        // ids are assigned in increasing order
        self.cases
            .binary_search_by_key(&id, |c| c.id())
            .ok()
            .map(|i| &self.cases[i])
    }

    /// The case a ticket was retained as, if any.
    pub fn case_for_ticket(&self, ticket: TicketId) -> Option<CaseId> {
        self.retained.get(&ticket).copied()
    }

    fn next_id(&self) -> u64 {
        self.cases.last().map_or(1, |c| c.id().0 + 1)
    }

    fn insert(&mut self, case: Case) {
        self.keys.insert(dedup_key(case.tokenized(), case.book_title()));
        if let Some(t) = case.ticket_id() {
            self.retained.insert(t, case.id());
        }
        self.cases.push(Arc::new(case));
    }
}

fn dedup_key(tokens: &TokenizedText, book_title: &str) -> (String, String) {
    (tokens.tokens().join(" "), book_title.to_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u64,
    case_count: usize,
    journal_bytes: u64,
    checksum: String,
    pipeline_fingerprint: String,
}

struct Journal {
    dir: PathBuf,
    /// Committed journal contents; the checksum covers exactly these bytes.
    hasher: Sha256,
    committed_bytes: u64,
}

impl Journal {
    fn journal_path(&self) -> PathBuf {
        self.dir.join(JOURNAL_FILE)
    }

    fn append(&mut self, lines: &[u8], state: &StoreSnapshot, pipeline: &Pipeline) -> Result<(), StoreError> {
        let path = self.journal_path();
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        file.write_all(lines).map_err(io_err(&path))?;
        file.sync_data().map_err(io_err(&path))?;

        let mut hasher = self.hasher.clone();
        hasher.update(lines);
        let committed_bytes = self.committed_bytes + lines.len() as u64;
        let manifest = Manifest {
            format: FORMAT.to_owned(),
            version: state.version,
            case_count: state.len(),
            journal_bytes: committed_bytes,
            checksum: hex::encode(hasher.clone().finalize()),
            pipeline_fingerprint: pipeline.fingerprint(),
        };
        write_manifest(&self.dir, &manifest)?;
        self.hasher = hasher;
        self.committed_bytes = committed_bytes;
        Ok(())
    }
}

fn write_manifest(dir: &Path, manifest: &Manifest) -> Result<(), StoreError> {
    let tmp = dir.join("manifest.json.tmp");
    let final_path = dir.join(MANIFEST_FILE);
    let body = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
    file.write_all(&body).map_err(io_err(&tmp))?;
    file.sync_all().map_err(io_err(&tmp))?;
    fs::rename(&tmp, &final_path).map_err(io_err(&final_path))?;
    Ok(())
}

fn encode_lines(records: &[&CaseRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for record in records {
        serde_json::to_writer(&mut out, record).expect("case record serializes");
        out.push(b'\n');
    }
    out
}

/// Case memory shared by the engine, the API and the CLI.
pub struct CaseStore {
    state: RwLock<Arc<StoreSnapshot>>,
    writer: Mutex<Option<Journal>>,
    pipeline: RwLock<Pipeline>,
}

impl fmt::Debug for CaseStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let snap = self.snapshot();
        f.debug_struct("CaseStore")
            .field("version", &snap.version())
            .field("cases", &snap.len())
            .finish()
    }
}

impl CaseStore {
    /// An empty in-memory store.
    pub fn new(pipeline: Pipeline) -> Self {
        Self {
            state: RwLock::new(Arc::new(StoreSnapshot::default())),
            writer: Mutex::new(None),
            pipeline: RwLock::new(pipeline),
        }
    }

    /// Opens (or initializes) a durable store in `dir`. Every later
    /// mutation is journaled and committed before it becomes visible.
    pub fn open(dir: impl AsRef<Path>, pipeline: Pipeline) -> Result<Self, StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let journal_path = dir.join(JOURNAL_FILE);
        if !dir.join(MANIFEST_FILE).exists() {
            if journal_path.exists() && fs::metadata(&journal_path).map_err(io_err(&journal_path))?.len() > 0 {
                return Err(StoreError::CorruptStore(format!(
                    "{JOURNAL_FILE} present without {MANIFEST_FILE}"
                )));
            }
            File::create(&journal_path).map_err(io_err(&journal_path))?;
            let empty = StoreSnapshot::default();
            let manifest = Manifest {
                format: FORMAT.to_owned(),
                version: 0,
                case_count: 0,
                journal_bytes: 0,
                checksum: hex::encode(Sha256::digest(b"")),
                pipeline_fingerprint: pipeline.fingerprint(),
            };
            write_manifest(dir, &manifest)?;
            let store = Self::new(pipeline);
            *store.writer.lock() = Some(Journal {
                dir: dir.to_path_buf(),
                hasher: Sha256::new(),
                committed_bytes: 0,
            });
            *store.state.write() = Arc::new(empty);
            return Ok(store);
        }

        let (snapshot, committed) = load_dir(dir, &pipeline)?;
        // drop an uncommitted tail left by an interrupted write
        let file = OpenOptions::new()
            .write(true)
            .open(&journal_path)
            .map_err(io_err(&journal_path))?;
        if file.metadata().map_err(io_err(&journal_path))?.len() > committed.len() as u64 {
            file.set_len(committed.len() as u64).map_err(io_err(&journal_path))?;
            file.sync_all().map_err(io_err(&journal_path))?;
        }
        let mut hasher = Sha256::new();
        hasher.update(&committed);
        let store = Self::new(pipeline);
        *store.state.write() = Arc::new(snapshot);
        *store.writer.lock() = Some(Journal {
            dir: dir.to_path_buf(),
            hasher,
            committed_bytes: committed.len() as u64,
        });
        Ok(store)
    }

    /// Loads a store written by [`CaseStore::persist`] (or a durable store
    /// directory) into memory, detached from the directory.
    pub fn restore(dir: impl AsRef<Path>, pipeline: Pipeline) -> Result<Self, StoreError> {
        let (snapshot, _) = load_dir(dir.as_ref(), &pipeline)?;
        let store = Self::new(pipeline);
        *store.state.write() = Arc::new(snapshot);
        Ok(store)
    }

    /// Writes the full current contents to `dir`, replacing any store there.
    pub fn persist(&self, dir: impl AsRef<Path>) -> Result<(), StoreError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let snap = self.snapshot();
        let records: Vec<&CaseRecord> = snap.cases().iter().map(|c| c.record()).collect();
        let body = encode_lines(&records);
        let journal_path = dir.join(JOURNAL_FILE);
        let tmp = dir.join("cases.jsonl.tmp");
        let mut file = File::create(&tmp).map_err(io_err(&tmp))?;
        file.write_all(&body).map_err(io_err(&tmp))?;
        file.sync_all().map_err(io_err(&tmp))?;
        fs::rename(&tmp, &journal_path).map_err(io_err(&journal_path))?;
        let manifest = Manifest {
            format: FORMAT.to_owned(),
            version: snap.version(),
            case_count: snap.len(),
            journal_bytes: body.len() as u64,
            checksum: hex::encode(Sha256::digest(&body)),
            pipeline_fingerprint: self.pipeline.read().fingerprint(),
        };
        write_manifest(dir, &manifest)
    }

    pub fn snapshot(&self) -> Arc<StoreSnapshot> {
        self.state.read().clone()
    }

    pub fn pipeline(&self) -> Pipeline {
        self.pipeline.read().clone()
    }

    /// Swaps the pipeline and re-derives every cached representation.
    pub fn set_pipeline(&self, pipeline: Pipeline) -> Result<(), StoreError> {
        let _writer = self.writer.lock();
        let snap = self.snapshot();
        let mut rebuilt = StoreSnapshot {
            version: snap.version,
            ..StoreSnapshot::default()
        };
        for (index, case) in snap.cases().iter().enumerate() {
            let derived = Case::derive(case.record().clone(), &pipeline)
                .map_err(|source| StoreError::InvalidText { index, source })?;
            rebuilt.insert(derived);
        }
        *self.pipeline.write() = pipeline;
        *self.state.write() = Arc::new(rebuilt);
        Ok(())
    }

    /// Whether a (text, book_title) pair is already present.
    pub fn contains(&self, text: &str, book_title: &str) -> Result<bool, TextError> {
        let raw = RawText::new(text, "")?;
        let tokens = self.pipeline.read().analyze(&raw)?;
        Ok(self.snapshot().keys.contains(&dedup_key(&tokens, book_title)))
    }

    pub fn import_seed(&self, path: impl AsRef<Path>) -> Result<usize, StoreError> {
        let path = path.as_ref();
        let body = fs::read_to_string(path).map_err(io_err(path))?;
        self.import_seed_json(&body)
    }

    /// Imports a seed JSON array. All records are validated before any is
    /// added; the version is bumped once for a non-empty import.
    pub fn import_seed_json(&self, body: &str) -> Result<usize, StoreError> {
        let value: Value =
            serde_json::from_str(body).map_err(|e| StoreError::NotAnArray(e.to_string()))?;
        let items = value
            .as_array()
            .ok_or_else(|| StoreError::NotAnArray("top-level value is not an array".into()))?;
        let mut records = Vec::with_capacity(items.len());
        for (index, item) in items.iter().enumerate() {
            let field = |key: &str| -> Result<String, StoreError> {
                item.get(key)
                    .and_then(Value::as_str)
                    .map(str::to_owned)
                    .ok_or_else(|| StoreError::SchemaError {
                        index,
                        key: key.to_owned(),
                    })
            };
            records.push(SeedRecord {
                text: field("text")?,
                book_title: field("book_title")?,
                personality: field("personality")?,
            });
        }
        self.import_records(&records)
    }

    pub fn import_records(&self, records: &[SeedRecord]) -> Result<usize, StoreError> {
        if records.is_empty() {
            return Ok(0);
        }
        let mut writer = self.writer.lock();
        let pipeline = self.pipeline.read().clone();
        let snap = self.snapshot();
        let version = snap.version + 1;
        let now = Utc::now();
        let mut seen = snap.keys.clone();
        let mut cases = Vec::with_capacity(records.len());
        for ((index, r), next_id) in records.iter().enumerate().zip(snap.next_id()..) {
            if r.book_title.trim().is_empty() {
                return Err(StoreError::SchemaError {
                    index,
                    key: "book_title".into(),
                });
            }
            let personality: PersonalityLabel = r.personality.parse().map_err(|_| {
                StoreError::InvalidPersonality {
                    index,
                    value: r.personality.clone(),
                }
            })?;
            let record = CaseRecord {
                case_id: CaseId(next_id),
                text: r.text.clone(),
                book_title: r.book_title.clone(),
                personality,
                origin: Origin::Seed,
                created_at: now,
                ticket_id: None,
                version,
            };
            let case = Case::derive(record, &pipeline)
                .map_err(|source| StoreError::InvalidText { index, source })?;
            if !seen.insert(dedup_key(case.tokenized(), case.book_title())) {
                return Err(StoreError::DuplicateRecord { index });
            }
            cases.push(case);
        }
        let count = cases.len();
        self.commit(&mut writer, &snap, cases, version, &pipeline)?;
        Ok(count)
    }

    /// Appends the candidate of an accepted ticket as a retained case.
    /// A ticket can be retained once.
    pub fn retain(&self, ticket: &ReviewTicket) -> Result<Arc<Case>, StoreError> {
        let mut writer = self.writer.lock();
        let snap = self.snapshot();
        if ticket.state() != TicketState::Accepted || snap.retained.contains_key(&ticket.id()) {
            return Err(StoreError::NotAccepted(ticket.id()));
        }
        let pipeline = self.pipeline.read().clone();
        let version = snap.version + 1;
        let candidate = ticket.candidate();
        let record = CaseRecord {
            case_id: CaseId(snap.next_id()),
            text: candidate.tweet_text.clone(),
            book_title: candidate.book_title.clone(),
            personality: candidate.personality.clone(),
            origin: Origin::Retained,
            created_at: Utc::now(),
            ticket_id: Some(ticket.id()),
            version,
        };
        let case = Case::derive(record, &pipeline)
            .map_err(|source| StoreError::InvalidText { index: 0, source })?;
        if snap.keys.contains(&dedup_key(case.tokenized(), case.book_title())) {
            return Err(StoreError::DuplicateRecord { index: 0 });
        }
        let id = case.id();
        self.commit(&mut writer, &snap, vec![case], version, &pipeline)?;
        Ok(self.snapshot().get(id).expect("just committed").clone())
    }

    fn commit(
        &self,
        writer: &mut Option<Journal>,
        base: &StoreSnapshot,
        cases: Vec<Case>,
        version: u64,
        pipeline: &Pipeline,
    ) -> Result<(), StoreError> {
        let mut next = base.clone();
        next.version = version;
        let records: Vec<CaseRecord> = cases.iter().map(|c| c.record().clone()).collect();
        for case in cases {
            next.insert(case);
        }
        if let Some(journal) = writer.as_mut() {
            let refs: Vec<&CaseRecord> = records.iter().collect();
            journal.append(&encode_lines(&refs), &next, pipeline)?;
        }
        *self.state.write() = Arc::new(next);
        Ok(())
    }
}

/// Reads and verifies a store directory. Returns the snapshot and the
/// committed journal bytes.
fn load_dir(dir: &Path, pipeline: &Pipeline) -> Result<(StoreSnapshot, Vec<u8>), StoreError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let manifest_body = fs::read(&manifest_path)
        .map_err(|e| StoreError::CorruptStore(format!("{}: {e}", manifest_path.display())))?;
    let manifest: Manifest = serde_json::from_slice(&manifest_body)
        .map_err(|e| StoreError::CorruptStore(format!("manifest: {e}")))?;
    if manifest.format != FORMAT {
        return Err(StoreError::CorruptStore(format!(
            "unsupported format {:?}",
            manifest.format
        )));
    }
    let journal_path = dir.join(JOURNAL_FILE);
    let mut journal = fs::read(&journal_path)
        .map_err(|e| StoreError::CorruptStore(format!("{}: {e}", journal_path.display())))?;
    let committed = usize::try_from(manifest.journal_bytes)
        .map_err(|_| StoreError::CorruptStore("journal length overflow".into()))?;
    if journal.len() < committed {
        return Err(StoreError::CorruptStore(format!(
            "journal truncated: {} of {} committed bytes",
            journal.len(),
            committed
        )));
    }
    journal.truncate(committed);
    if hex::encode(Sha256::digest(&journal)) != manifest.checksum {
        return Err(StoreError::CorruptStore("journal checksum mismatch".into()));
    }

    let mut snapshot = StoreSnapshot::default();
    for (i, line) in journal.split(|&b| b == b'\n').enumerate() {
        if line.is_empty() {
            continue;
        }
        let record: CaseRecord = serde_json::from_slice(line)
            .map_err(|e| StoreError::CorruptStore(format!("journal line {}: {e}", i + 1)))?;
        if record.version > manifest.version || snapshot.cases.last().is_some_and(|c| c.id() >= record.case_id) {
            return Err(StoreError::CorruptStore(format!(
                "journal line {} is out of order",
                i + 1
            )));
        }
        if record.origin == Origin::Retained && record.ticket_id.is_none() {
            return Err(StoreError::CorruptStore(format!(
                "journal line {}: retained case without ticket",
                i + 1
            )));
        }
        let case = Case::derive(record, pipeline)
            .map_err(|e| StoreError::CorruptStore(format!("journal line {}: {e}", i + 1)))?;
        snapshot.insert(case);
    }
    if snapshot.len() != manifest.case_count {
        return Err(StoreError::CorruptStore(format!(
            "manifest lists {} cases, journal has {}",
            manifest.case_count,
            snapshot.len()
        )));
    }
    snapshot.version = manifest.version;
    Ok((snapshot, journal))
}
