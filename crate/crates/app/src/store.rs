//! Event-sourced dataset store.
//!
//! Every state change is one line of `events.jsonl`. The in-memory state is
//! the fold of that log, and `snapshot.json` is a materialized copy of it
//! that replay reproduces byte for byte. A lock file keeps two processes
//! from writing the same dataset.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};
use thiserror::Error;

use creative_select::model::{CreativePairSample, Split};
use creative_select::pipeline::FunnelCounts;
use creative_select::protocol::ProtocolAnswers;

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const LOCK_FILE: &str = ".lock";

/// Externally tagged, `{"sample_added": {...}}`, so that payloads parse
/// without buffering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Event {
    /// Totals from one ingest run, before and after exposure filtering.
    IngestRecorded { collected: usize, filtered: usize },
    SampleAdded { sample: CreativePairSample },
    SessionCreated {
        session_id: String,
        annotator_id: String,
        created_at_ms: u64,
    },
    SampleClaimed {
        session_id: String,
        pair_id: String,
        expires_at_ms: u64,
    },
    AnnotationSubmitted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_id: Option<String>,
        pair_id: String,
        answers: ProtocolAnswers,
    },
    SampleExcluded {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        session_id: Option<String>,
        pair_id: String,
        answers: ProtocolAnswers,
    },
    SplitAssigned { pair_id: String, split: Split },
}

/// One log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub event: Event,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleStatus {
    Pending,
    Annotated,
    Excluded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lease {
    pub session_id: String,
    pub expires_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample: CreativePairSample,
    pub status: SampleStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lease: Option<Lease>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub annotator_id: String,
    pub created_at_ms: u64,
    pub annotated: usize,
    pub excluded: usize,
}

/// Materialized state of one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSnapshot {
    pub dataset_id: String,
    /// Sequence number of the last applied event, 0 when the log is empty.
    pub last_seq: u64,
    pub collected: usize,
    pub filtered: usize,
    pub samples: BTreeMap<String, SampleRecord>,
    pub sessions: BTreeMap<String, SessionRecord>,
}

/// A live lease held by one session, as seen at some instant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Claim {
    pub pair_id: String,
    pub expires_at_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationSession {
    pub session_id: String,
    pub annotator_id: String,
    pub claims: Vec<Claim>,
    pub annotated: usize,
    pub excluded: usize,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("CORRUPT_LOG at byte {offset} (line {line}): {reason}")]
    CorruptLog { offset: u64, line: usize, reason: String },
    #[error("LOCKED: dataset {0} is held by another process")]
    Locked(String),
    #[error("UNKNOWN_SAMPLE: {0}")]
    UnknownSample(String),
    #[error("UNKNOWN_SESSION: {0}")]
    UnknownSession(String),
    #[error("DUPLICATE: {0}")]
    Duplicate(String),
    #[error("LEASE_CONFLICT: {pair_id} is claimed by another session")]
    LeaseConflict { pair_id: String },
    #[error("LEASE_LOST: session {session_id} holds no live lease on {pair_id}")]
    LeaseLost { session_id: String, pair_id: String },
    #[error("NOT_PENDING: {0} is already annotated or excluded")]
    NotPending(String),
    #[error("NOT_ANNOTATED: {0} cannot be split before it is annotated")]
    NotAnnotated(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl StoreError {
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::CorruptLog { .. } => "CORRUPT_LOG",
            StoreError::Locked(_) => "LOCKED",
            StoreError::UnknownSample(_) => "UNKNOWN_SAMPLE",
            StoreError::UnknownSession(_) => "UNKNOWN_SESSION",
            StoreError::Duplicate(_) => "DUPLICATE",
            StoreError::LeaseConflict { .. } => "LEASE_CONFLICT",
            StoreError::LeaseLost { .. } => "LEASE_LOST",
            StoreError::NotPending(_) => "NOT_PENDING",
            StoreError::NotAnnotated(_) => "NOT_ANNOTATED",
            StoreError::Io(_) => "IO",
            StoreError::Json(_) => "JSON",
        }
    }
}

/// Milliseconds since the Unix epoch.
pub trait Clock: Send + Sync {
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// A clock that only moves when told to.
#[derive(Debug, Default)]
pub struct ManualClock(AtomicU64);

impl ManualClock {
    pub fn new(start_ms: u64) -> Self {
        Self(AtomicU64::new(start_ms))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }
}

impl Clock for ManualClock {
    fn now_ms(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

impl DatasetSnapshot {
    pub fn empty(dataset_id: impl Into<String>) -> Self {
        Self {
            dataset_id: dataset_id.into(),
            last_seq: 0,
            collected: 0,
            filtered: 0,
            samples: BTreeMap::new(),
            sessions: BTreeMap::new(),
        }
    }

    /// Canonical bytes: pretty JSON with a trailing newline. Maps are
    /// ordered, so equal states always serialize identically.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("snapshot is serializable");
        out.push(b'\n');
        out
    }

    pub fn funnel(&self) -> FunnelCounts {
        let mut f = FunnelCounts {
            collected: self.collected,
            filtered: self.filtered,
            ..FunnelCounts::default()
        };
        for r in self.samples.values() {
            match r.status {
                SampleStatus::Pending => {}
                SampleStatus::Annotated => f.annotated += 1,
                SampleStatus::Excluded => {
                    f.annotated += 1;
                    f.excluded += 1;
                }
            }
            match r.sample.split {
                Split::Train => f.train += 1,
                Split::Test => f.test += 1,
                Split::Unassigned => {}
            }
        }
        f
    }

    pub fn session(&self, session_id: &str, now_ms: u64) -> Option<AnnotationSession> {
        let s = self.sessions.get(session_id)?;
        let claims = self
            .samples
            .iter()
            .filter_map(|(id, r)| match &r.lease {
                Some(l) if l.session_id == session_id && l.expires_at_ms > now_ms => Some(Claim {
                    pair_id: id.clone(),
                    expires_at_ms: l.expires_at_ms,
                }),
                _ => None,
            })
            .collect();
        Some(AnnotationSession {
            session_id: session_id.to_string(),
            annotator_id: s.annotator_id.clone(),
            claims,
            annotated: s.annotated,
            excluded: s.excluded,
        })
    }

    /// Rejects events that would break an invariant at time `now_ms`.
    /// Replay skips this check: the log only ever holds accepted events.
    pub fn check(&self, event: &Event, now_ms: u64) -> Result<(), StoreError> {
        match event {
            Event::IngestRecorded { .. } => Ok(()),
            Event::SampleAdded { sample } => {
                if self.samples.contains_key(&sample.pair_id) {
                    return Err(StoreError::Duplicate(sample.pair_id.clone()));
                }
                Ok(())
            }
            Event::SessionCreated { session_id, .. } => {
                if self.sessions.contains_key(session_id) {
                    return Err(StoreError::Duplicate(session_id.clone()));
                }
                Ok(())
            }
            Event::SampleClaimed { session_id, pair_id, .. } => {
                self.known_session(session_id)?;
                let r = self.pending(pair_id)?;
                match &r.lease {
                    Some(l) if l.session_id != *session_id && l.expires_at_ms > now_ms => {
                        Err(StoreError::LeaseConflict { pair_id: pair_id.clone() })
                    }
                    _ => Ok(()),
                }
            }
            Event::AnnotationSubmitted { session_id, pair_id, .. } | Event::SampleExcluded { session_id, pair_id, .. } => {
                let r = self.pending(pair_id)?;
                let Some(session_id) = session_id else { return Ok(()) };
                self.known_session(session_id)?;
                match &r.lease {
                    Some(l) if l.session_id == *session_id && l.expires_at_ms > now_ms => Ok(()),
                    _ => Err(StoreError::LeaseLost {
                        session_id: session_id.clone(),
                        pair_id: pair_id.clone(),
                    }),
                }
            }
            Event::SplitAssigned { pair_id, .. } => {
                let r = self.record(pair_id)?;
                if r.status != SampleStatus::Annotated {
                    return Err(StoreError::NotAnnotated(pair_id.clone()));
                }
                Ok(())
            }
        }
    }

    fn record(&self, pair_id: &str) -> Result<&SampleRecord, StoreError> {
        self.samples
            .get(pair_id)
            .ok_or_else(|| StoreError::UnknownSample(pair_id.to_string()))
    }

    fn pending(&self, pair_id: &str) -> Result<&SampleRecord, StoreError> {
        let r = self.record(pair_id)?;
        if r.status != SampleStatus::Pending {
            return Err(StoreError::NotPending(pair_id.to_string()));
        }
        Ok(r)
    }

    fn known_session(&self, session_id: &str) -> Result<(), StoreError> {
        if !self.sessions.contains_key(session_id) {
            return Err(StoreError::UnknownSession(session_id.to_string()));
        }
        Ok(())
    }

    /// Folds one event into the state. Applying a logged event never fails;
    /// events that refer to unknown ids are ignored.
    pub fn apply(&mut self, entry: &LogEntry) {
        self.last_seq = entry.seq;
        match &entry.event {
            Event::IngestRecorded { collected, filtered } => {
                self.collected += collected;
                self.filtered += filtered;
            }
            Event::SampleAdded { sample } => {
                self.samples.insert(
                    sample.pair_id.clone(),
                    SampleRecord {
                        sample: sample.clone(),
                        status: SampleStatus::Pending,
                        lease: None,
                    },
                );
            }
            Event::SessionCreated {
                session_id,
                annotator_id,
                created_at_ms,
            } => {
                self.sessions.insert(
                    session_id.clone(),
                    SessionRecord {
                        annotator_id: annotator_id.clone(),
                        created_at_ms: *created_at_ms,
                        annotated: 0,
                        excluded: 0,
                    },
                );
            }
            Event::SampleClaimed {
                session_id,
                pair_id,
                expires_at_ms,
            } => {
                if let Some(r) = self.samples.get_mut(pair_id) {
                    r.lease = Some(Lease {
                        session_id: session_id.clone(),
                        expires_at_ms: *expires_at_ms,
                    });
                }
            }
            Event::AnnotationSubmitted {
                session_id,
                pair_id,
                answers,
            } => {
                if let Some(r) = self.samples.get_mut(pair_id) {
                    r.status = SampleStatus::Annotated;
                    r.lease = None;
                    r.sample.annotations = Some(answers.clone());
                }
                if let Some(s) = session_id.as_ref().and_then(|id| self.sessions.get_mut(id)) {
                    s.annotated += 1;
                }
            }
            Event::SampleExcluded {
                session_id,
                pair_id,
                answers,
            } => {
                if let Some(r) = self.samples.get_mut(pair_id) {
                    r.status = SampleStatus::Excluded;
                    r.lease = None;
                    r.sample.annotations = Some(answers.clone());
                }
                if let Some(s) = session_id.as_ref().and_then(|id| self.sessions.get_mut(id)) {
                    s.excluded += 1;
                }
            }
            Event::SplitAssigned { pair_id, split } => {
                if let Some(r) = self.samples.get_mut(pair_id) {
                    r.sample.split = *split;
                }
            }
        }
    }
}

/// Result of scanning a log: every intact entry, plus where the scan
/// stopped if the log does not end cleanly.
#[derive(Debug)]
pub struct LogScan {
    pub entries: Vec<LogEntry>,
    /// Byte length of the intact prefix.
    pub valid_len: u64,
    pub corruption: Option<StoreError>,
}

/// Reads entries up to the first line that is torn, unparsable, or out of
/// sequence. Sequence numbers must run 1, 2, 3, ...
pub fn scan_log(reader: impl Read) -> io::Result<LogScan> {
    let mut reader = BufReader::new(reader);
    let mut entries = Vec::new();
    let mut offset = 0u64;
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        let line = entries.len() + 1;
        let corrupt = |reason: String| StoreError::CorruptLog { offset, line, reason };
        if buf.last() != Some(&b'\n') {
            return Ok(LogScan {
                entries,
                valid_len: offset,
                corruption: Some(corrupt("final line has no terminating newline".into())),
            });
        }
        match serde_json::from_slice::<LogEntry>(&buf) {
            Ok(entry) if entry.seq == line as u64 => entries.push(entry),
            Ok(entry) => {
                return Ok(LogScan {
                    entries,
                    valid_len: offset,
                    corruption: Some(corrupt(format!("expected seq {line}, found {}", entry.seq))),
                })
            }
            Err(e) => {
                return Ok(LogScan {
                    entries,
                    valid_len: offset,
                    corruption: Some(corrupt(e.to_string())),
                })
            }
        }
        offset += n as u64;
    }
    Ok(LogScan {
        entries,
        valid_len: offset,
        corruption: None,
    })
}

/// Folds a complete log into a snapshot, failing on any corruption.
pub fn replay(dataset_id: &str, reader: impl Read) -> Result<DatasetSnapshot, StoreError> {
    let scan = scan_log(reader)?;
    if let Some(e) = scan.corruption {
        return Err(e);
    }
    let mut snap = DatasetSnapshot::empty(dataset_id);
    for entry in &scan.entries {
        snap.apply(entry);
    }
    Ok(snap)
}

/// What to do when the log ends in a torn or unparsable line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Recovery {
    /// Refuse to open with `CORRUPT_LOG`.
    #[default]
    Fail,
    /// Cut the log back to its intact prefix and continue from there.
    TruncateTail,
}

/// Exclusive writer for one dataset directory.
#[derive(Debug)]
pub struct DatasetStore {
    dir: PathBuf,
    state: DatasetSnapshot,
    log: File,
    _lock: File,
}

impl DatasetStore {
    pub fn open(root: impl AsRef<Path>, dataset_id: &str) -> Result<Self, StoreError> {
        Self::open_with(root, dataset_id, Recovery::Fail)
    }

    pub fn open_with(root: impl AsRef<Path>, dataset_id: &str, recovery: Recovery) -> Result<Self, StoreError> {
        let dir = root.as_ref().join(dataset_id);
        fs::create_dir_all(&dir)?;
        let lock = OpenOptions::new()
            .create(true)
            .truncate(false)
            .write(true)
            .open(dir.join(LOCK_FILE))?;
        if lock.try_lock().is_err() {
            return Err(StoreError::Locked(dataset_id.to_string()));
        }

        let log_path = dir.join(EVENTS_FILE);
        let mut log = OpenOptions::new()
            .create(true)
            .truncate(false)
            .read(true)
            .append(true)
            .open(&log_path)?;
        let scan = scan_log(&mut log)?;
        if let Some(err) = scan.corruption {
            match recovery {
                Recovery::Fail => return Err(err),
                Recovery::TruncateTail => {
                    tracing::warn!(%err, "truncating event log to its intact prefix");
                    log.set_len(scan.valid_len)?;
                    log.sync_all()?;
                }
            }
        }
        let mut state = DatasetSnapshot::empty(dataset_id);
        for entry in &scan.entries {
            state.apply(entry);
        }
        Ok(Self {
            dir,
            state,
            log,
            _lock: lock,
        })
    }

    pub fn dataset_id(&self) -> &str {
        &self.state.dataset_id
    }

    pub fn state(&self) -> &DatasetSnapshot {
        &self.state
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn log_path(&self) -> PathBuf {
        self.dir.join(EVENTS_FILE)
    }

    pub fn snapshot_path(&self) -> PathBuf {
        self.dir.join(SNAPSHOT_FILE)
    }

    /// Checks `event` against the current state, appends it durably, then
    /// applies it. Returns the assigned sequence number.
    pub fn append(&mut self, event: Event, now_ms: u64) -> Result<u64, StoreError> {
        self.state.check(&event, now_ms)?;
        let entry = LogEntry {
            seq: self.state.last_seq + 1,
            event,
        };
        let mut line = serde_json::to_vec(&entry)?;
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.sync_data()?;
        self.state.apply(&entry);
        Ok(entry.seq)
    }

    /// Writes the current state to `snapshot.json` through a temporary file
    /// and a rename, so readers never see a partial snapshot.
    pub fn write_snapshot(&self) -> Result<PathBuf, StoreError> {
        let path = self.snapshot_path();
        let tmp = self.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        let mut f = File::create(&tmp)?;
        f.write_all(&self.state.to_bytes())?;
        f.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(path)
    }

    /// Creates a session whose id is derived from the log position, so ids
    /// are stable under replay.
    pub fn create_session(&mut self, annotator_id: &str, now_ms: u64) -> Result<String, StoreError> {
        let session_id = format!("s{:06}", self.state.last_seq + 1);
        self.append(
            Event::SessionCreated {
                session_id: session_id.clone(),
                annotator_id: annotator_id.to_string(),
                created_at_ms: now_ms,
            },
            now_ms,
        )?;
        Ok(session_id)
    }

    /// Leases the first pending sample (in pair id order) that nobody else
    /// holds. A session that already holds a live lease gets that sample
    /// back with a refreshed expiry. `None` when nothing is available.
    pub fn claim_next(&mut self, session_id: &str, lease_ms: u64, now_ms: u64) -> Result<Option<Claim>, StoreError> {
        self.state.known_session(session_id)?;
        let free = |r: &SampleRecord| match &r.lease {
            None => true,
            Some(l) => l.expires_at_ms <= now_ms || l.session_id == session_id,
        };
        let own = self.state.samples.iter().find(|(_, r)| {
            r.status == SampleStatus::Pending
                && r.lease.as_ref().is_some_and(|l| l.session_id == session_id && l.expires_at_ms > now_ms)
        });
        let pick = own
            .or_else(|| {
                self.state
                    .samples
                    .iter()
                    .find(|(_, r)| r.status == SampleStatus::Pending && free(r))
            })
            .map(|(id, _)| id.clone());
        let Some(pair_id) = pick else { return Ok(None) };
        self.claim(session_id, &pair_id, lease_ms, now_ms).map(Some)
    }

    /// Leases a specific sample; fails with `LEASE_CONFLICT` if another
    /// session holds a live lease on it.
    pub fn claim(&mut self, session_id: &str, pair_id: &str, lease_ms: u64, now_ms: u64) -> Result<Claim, StoreError> {
        let expires_at_ms = now_ms.saturating_add(lease_ms);
        self.append(
            Event::SampleClaimed {
                session_id: session_id.to_string(),
                pair_id: pair_id.to_string(),
                expires_at_ms,
            },
            now_ms,
        )?;
        Ok(Claim {
            pair_id: pair_id.to_string(),
            expires_at_ms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use creative_select::synth::{generate_synthetic, PreferenceRule};

    #[test]
    fn empty_log_gives_empty_snapshot() {
        let snap = replay("d", io::empty()).unwrap();
        assert_eq!(snap, DatasetSnapshot::empty("d"));
        assert_eq!(snap.funnel(), FunnelCounts::default());
    }

    #[test]
    fn lock_excludes_a_second_writer() {
        let dir = tempfile::tempdir().unwrap();
        let first = DatasetStore::open(dir.path(), "d").unwrap();
        assert!(matches!(DatasetStore::open(dir.path(), "d"), Err(StoreError::Locked(_))));
        drop(first);
        DatasetStore::open(dir.path(), "d").unwrap();
    }

    #[test]
    fn leases_expire_and_conflict() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = DatasetStore::open(dir.path(), "d").unwrap();
        let sample = generate_synthetic(1, 1, &PreferenceRule::default()).remove(0);
        let pair = sample.pair_id.clone();
        store.append(Event::SampleAdded { sample }, 0).unwrap();
        let s1 = store.create_session("ann-1", 0).unwrap();
        let s2 = store.create_session("ann-2", 0).unwrap();
        assert_eq!(store.claim_next(&s1, 100, 0).unwrap().unwrap().pair_id, pair);
        assert_eq!(store.claim_next(&s2, 100, 50).unwrap(), None);
        assert!(matches!(store.claim(&s2, &pair, 100, 50), Err(StoreError::LeaseConflict { .. })));
        assert_eq!(store.state().session(&s1, 50).unwrap().claims.len(), 1);
        assert_eq!(store.claim_next(&s2, 100, 100).unwrap().unwrap().pair_id, pair);
        assert_eq!(store.state().session(&s1, 100).unwrap().claims, vec![]);
    }
}
