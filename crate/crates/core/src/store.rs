//! Append-only persistence for auditors and their annotations.
//!
//! Two newline-delimited JSON files live in the store directory:
//! `auditors.ndjson` and `annotations.ndjson`. Nothing is ever rewritten.
//! A re-label is a single new annotation line; on replay it supersedes the
//! previous live annotation of the same auditor on the same revision, so a
//! correction is applied atomically or not at all.
//!
//! On open the logs are replayed into an in-memory index. A torn final line
//! (a write cut short by a crash) is discarded and trimmed from the file;
//! any other malformed line is reported as corruption.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::Dataset;
use crate::filter::FilterFingerprint;
use crate::focus::FocusBucket;

pub const ANNOTATIONS_FILE: &str = "annotations.ndjson";
pub const AUDITORS_FILE: &str = "auditors.ndjson";
pub const MAX_NOTE_CHARS: usize = 1_000;
pub const MAX_DISPLAY_NAME_CHARS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Damaging,
    NotDamaging,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Auditor {
    pub auditor_id: String,
    pub display_name: String,
    pub created_at: i64,
    /// SHA-256 of the bearer token; the token itself is never stored.
    pub token_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub annotation_id: u64,
    pub auditor_id: String,
    pub rev_id: u64,
    pub label: Label,
    pub filter_fingerprint: FilterFingerprint,
    pub bucket: FocusBucket,
    pub note: Option<String>,
    pub created_at: i64,
    pub superseded_by: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewAnnotation {
    pub auditor_id: String,
    pub rev_id: u64,
    pub label: Label,
    pub bucket: FocusBucket,
    pub filter_fingerprint: FilterFingerprint,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub damaging: u64,
    pub not_damaging: u64,
    pub skip: u64,
}

impl LabelCounts {
    pub fn add(&mut self, label: Label) {
        match label {
            Label::Damaging => self.damaging += 1,
            Label::NotDamaging => self.not_damaging += 1,
            Label::Skip => self.skip += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct History {
    pub annotations: Vec<Annotation>,
    pub counts: BTreeMap<FocusBucket, LabelCounts>,
}

/// Result of a write: the new annotation and the one it replaced, if any.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Recorded {
    pub annotation: Annotation,
    pub superseded: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{file}:{line}: {message}")]
    Corrupt { file: PathBuf, line: usize, message: String },
    #[error("unknown auditor")]
    UnknownAuditor,
    #[error("rev_id {0} is not in the dataset")]
    UnknownRev(u64),
    #[error("display name must be 1 to {MAX_DISPLAY_NAME_CHARS} characters")]
    InvalidName,
    #[error("note exceeds {MAX_NOTE_CHARS} characters")]
    NoteTooLong,
}

/// Answers whether a revision exists, so writes can be validated.
pub trait RevisionCatalog: Send + Sync {
    fn contains_rev(&self, rev_id: u64) -> bool;
}

impl RevisionCatalog for Dataset {
    fn contains_rev(&self, rev_id: u64) -> bool {
        self.contains(rev_id)
    }
}

/// Admits every revision.
pub struct AnyRevision;

impl RevisionCatalog for AnyRevision {
    fn contains_rev(&self, _: u64) -> bool {
        true
    }
}

pub fn token_digest(token: &str) -> String {
    hex::encode(Sha256::digest(token.as_bytes()))
}

fn random_hex128() -> String {
    format!("{:032x}", rand::random::<u128>())
}

fn now() -> i64 {
    chrono::Utc::now().timestamp()
}

/// The replayed contents of a store directory.
#[derive(Debug, Default, Clone)]
pub struct Snapshot {
    auditors: HashMap<String, Auditor>,
    by_token: HashMap<String, String>,
    annotations: Vec<Annotation>,
    by_id: HashMap<u64, usize>,
    live: HashMap<(String, u64), usize>,
    next_id: u64,
}

impl Snapshot {
    fn add_auditor(&mut self, auditor: Auditor) {
        self.by_token.insert(auditor.token_sha256.clone(), auditor.auditor_id.clone());
        self.auditors.insert(auditor.auditor_id.clone(), auditor);
    }

    /// Appends an annotation, superseding the previous live one for the
    /// same (auditor, rev). Returns the superseded id.
    fn apply(&mut self, annotation: Annotation) -> Option<u64> {
        let key = (annotation.auditor_id.clone(), annotation.rev_id);
        let pos = self.annotations.len();
        let id = annotation.annotation_id;
        self.next_id = self.next_id.max(id + 1);
        self.by_id.insert(id, pos);
        self.annotations.push(annotation);
        let previous = self.live.insert(key, pos)?;
        self.annotations[previous].superseded_by = Some(id);
        Some(self.annotations[previous].annotation_id)
    }

    pub fn auditor(&self, auditor_id: &str) -> Option<&Auditor> {
        self.auditors.get(auditor_id)
    }

    pub fn auditors(&self) -> impl Iterator<Item = &Auditor> {
        self.auditors.values()
    }

    pub fn annotation(&self, annotation_id: u64) -> Option<&Annotation> {
        self.by_id.get(&annotation_id).map(|&i| &self.annotations[i])
    }

    /// Every annotation ever written, in log order.
    pub fn all(&self) -> &[Annotation] {
        &self.annotations
    }

    /// Live annotations of every auditor, in log order.
    pub fn live(&self) -> impl Iterator<Item = &Annotation> {
        self.annotations.iter().filter(|a| a.superseded_by.is_none())
    }

    pub fn live_label(&self, auditor_id: &str, rev_id: u64) -> Option<&Annotation> {
        self.live.get(&(auditor_id.to_owned(), rev_id)).map(|&i| &self.annotations[i])
    }

    pub fn history(&self, auditor_id: &str) -> Result<History, StoreError> {
        if !self.auditors.contains_key(auditor_id) {
            return Err(StoreError::UnknownAuditor);
        }
        let mut annotations: Vec<Annotation> =
            self.live().filter(|a| a.auditor_id == auditor_id).cloned().collect();
        annotations.sort_by_key(|a| (a.created_at, a.annotation_id));
        let mut counts: BTreeMap<FocusBucket, LabelCounts> = BTreeMap::new();
        for a in &annotations {
            counts.entry(a.bucket).or_default().add(a.label);
        }
        Ok(History { annotations, counts })
    }
}

struct Replayed<T> {
    items: Vec<T>,
    /// Byte length of the complete-line prefix.
    valid_len: u64,
    torn: bool,
}

fn replay_file<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Replayed<T>, StoreError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Ok(Replayed { items: Vec::new(), valid_len: 0, torn: false })
        }
        Err(e) => return Err(e.into()),
    };
    let mut reader = BufReader::new(file);
    let mut out = Replayed { items: Vec::new(), valid_len: 0, torn: false };
    let mut buf = Vec::new();
    let mut line_no = 0;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        if buf.last() != Some(&b'\n') {
            out.torn = true;
            break;
        }
        let item = serde_json::from_slice(&buf[..n - 1]).map_err(|e| StoreError::Corrupt {
            file: path.to_owned(),
            line: line_no,
            message: e.to_string(),
        })?;
        out.items.push(item);
        out.valid_len += n as u64;
    }
    Ok(out)
}

fn corrupt(path: &Path, line: usize, message: impl Into<String>) -> StoreError {
    StoreError::Corrupt { file: path.to_owned(), line, message: message.into() }
}

/// Reads a store directory without modifying it.
pub fn replay(dir: &Path) -> Result<Snapshot, StoreError> {
    Ok(replay_inner(dir)?.0)
}

/// (path, complete-line length, torn) for each log.
type Tail = (PathBuf, u64, bool);

fn replay_inner(dir: &Path) -> Result<(Snapshot, [Tail; 2]), StoreError> {
    let auditors_path = dir.join(AUDITORS_FILE);
    let annotations_path = dir.join(ANNOTATIONS_FILE);
    let auditors: Replayed<Auditor> = replay_file(&auditors_path)?;
    let annotations: Replayed<Annotation> = replay_file(&annotations_path)?;

    let mut snap = Snapshot { next_id: 1, ..Default::default() };
    for (i, a) in auditors.items.into_iter().enumerate() {
        if snap.auditors.contains_key(&a.auditor_id) {
            return Err(corrupt(&auditors_path, i + 1, "duplicate auditor_id"));
        }
        snap.add_auditor(a);
    }
    for (i, a) in annotations.items.into_iter().enumerate() {
        if a.annotation_id < snap.next_id {
            return Err(corrupt(&annotations_path, i + 1, "annotation ids must increase"));
        }
        if !snap.auditors.contains_key(&a.auditor_id) {
            return Err(corrupt(&annotations_path, i + 1, "annotation by unknown auditor"));
        }
        if a.superseded_by.is_some() {
            return Err(corrupt(&annotations_path, i + 1, "logged annotation is already superseded"));
        }
        snap.apply(a);
    }
    let tails = [
        (auditors_path, auditors.valid_len, auditors.torn),
        (annotations_path, annotations.valid_len, annotations.torn),
    ];
    Ok((snap, tails))
}

struct Writer {
    auditors: File,
    annotations: File,
}

/// Single-writer, many-reader annotation store.
pub struct Store {
    dir: PathBuf,
    catalog: Arc<dyn RevisionCatalog>,
    writer: Mutex<Writer>,
    state: RwLock<Snapshot>,
    durable: bool,
    clock: Box<dyn Fn() -> i64 + Send + Sync>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).finish_non_exhaustive()
    }
}

impl Store {
    /// Opens (creating if needed) the store in `dir` and replays its logs.
    pub fn open(dir: &Path, catalog: Arc<dyn RevisionCatalog>) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let (snapshot, tails) = replay_inner(dir)?;
        for (path, valid_len, torn) in &tails {
            if *torn {
                OpenOptions::new().write(true).open(path)?.set_len(*valid_len)?;
            }
        }
        let append = |p: &Path| OpenOptions::new().create(true).append(true).open(p);
        let writer = Writer {
            auditors: append(&tails[0].0)?,
            annotations: append(&tails[1].0)?,
        };
        Ok(Store {
            dir: dir.to_owned(),
            catalog,
            writer: Mutex::new(writer),
            state: RwLock::new(snapshot),
            durable: true,
            clock: Box::new(now),
        })
    }

    /// Skip `fsync` after each append. Writes still reach the OS.
    pub fn without_fsync(mut self) -> Self {
        self.durable = false;
        self
    }

    pub fn with_clock(mut self, clock: impl Fn() -> i64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn append_line<T: Serialize>(&self, file: &mut File, value: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(value).expect("log entries serialize");
        line.push(b'\n');
        file.write_all(&line)?;
        if self.durable {
            file.sync_data()?;
        }
        Ok(())
    }

    /// Creates an auditor and returns it with its bearer token.
    pub fn create_auditor(&self, display_name: &str) -> Result<(Auditor, String), StoreError> {
        let chars = display_name.chars().count();
        if display_name.trim().is_empty() || chars > MAX_DISPLAY_NAME_CHARS {
            return Err(StoreError::InvalidName);
        }
        let token = random_hex128();
        let mut writer = self.writer.lock().expect("store writer poisoned");
        let mut auditor_id = random_hex128();
        while self.state.read().expect("store state poisoned").auditors.contains_key(&auditor_id) {
            auditor_id = random_hex128();
        }
        let auditor = Auditor {
            auditor_id,
            display_name: display_name.to_owned(),
            created_at: (self.clock)(),
            token_sha256: token_digest(&token),
        };
        self.append_line(&mut writer.auditors, &auditor)?;
        self.state.write().expect("store state poisoned").add_auditor(auditor.clone());
        Ok((auditor, token))
    }

    pub fn authenticate(&self, token: &str) -> Option<Auditor> {
        let state = self.state.read().expect("store state poisoned");
        let id = state.by_token.get(&token_digest(token))?;
        state.auditors.get(id).cloned()
    }

    pub fn record_annotation(&self, new: NewAnnotation) -> Result<Recorded, StoreError> {
        if new.note.as_ref().is_some_and(|n| n.chars().count() > MAX_NOTE_CHARS) {
            return Err(StoreError::NoteTooLong);
        }
        let mut writer = self.writer.lock().expect("store writer poisoned");
        let annotation_id = {
            let state = self.state.read().expect("store state poisoned");
            if !state.auditors.contains_key(&new.auditor_id) {
                return Err(StoreError::UnknownAuditor);
            }
            state.next_id
        };
        if !self.catalog.contains_rev(new.rev_id) {
            return Err(StoreError::UnknownRev(new.rev_id));
        }
        let annotation = Annotation {
            annotation_id,
            auditor_id: new.auditor_id,
            rev_id: new.rev_id,
            label: new.label,
            filter_fingerprint: new.filter_fingerprint,
            bucket: new.bucket,
            note: new.note,
            created_at: (self.clock)(),
            superseded_by: None,
        };
        self.append_line(&mut writer.annotations, &annotation)?;
        let superseded = self.state.write().expect("store state poisoned").apply(annotation.clone());
        Ok(Recorded { annotation, superseded })
    }

    pub fn annotation_history(&self, auditor_id: &str) -> Result<History, StoreError> {
        self.state.read().expect("store state poisoned").history(auditor_id)
    }

    /// Runs `f` against a consistent view of the store.
    pub fn read<R>(&self, f: impl FnOnce(&Snapshot) -> R) -> R {
        f(&self.state.read().expect("store state poisoned"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::atomic::{AtomicI64, Ordering};

    fn open(dir: &Path) -> Store {
        let clock = Arc::new(AtomicI64::new(1_000));
        Store::open(dir, Arc::new(AnyRevision))
            .unwrap()
            .without_fsync()
            .with_clock(move || clock.fetch_add(1, Ordering::SeqCst))
    }

    fn new(auditor: &Auditor, rev_id: u64, label: Label, bucket: FocusBucket) -> NewAnnotation {
        NewAnnotation {
            auditor_id: auditor.auditor_id.clone(),
            rev_id,
            label,
            bucket,
            filter_fingerprint: FilterFingerprint(7),
            note: None,
        }
    }

    #[test]
    fn first_label_then_correction() {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        let (alice, token) = store.create_auditor("alice").unwrap();
        assert_eq!(store.authenticate(&token).unwrap(), alice);
        assert!(store.authenticate("nope").is_none());

        let first = store.record_annotation(new(&alice, 10, Label::Damaging, FocusBucket::UnexpectedRevert)).unwrap();
        assert_eq!(first.superseded, None);
        assert_eq!(first.annotation.superseded_by, None);

        let second =
            store.record_annotation(new(&alice, 10, Label::NotDamaging, FocusBucket::UnexpectedRevert)).unwrap();
        assert_eq!(second.superseded, Some(first.annotation.annotation_id));
        store.read(|s| {
            assert_eq!(s.annotation(first.annotation.annotation_id).unwrap().superseded_by, Some(2));
            assert_eq!(s.live_label(&alice.auditor_id, 10).unwrap().label, Label::NotDamaging);
        });
        let history = store.annotation_history(&alice.auditor_id).unwrap();
        assert_eq!(history.annotations.len(), 1);
    }

    #[test]
    fn history_counts() {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        let (a, _) = store.create_auditor("a").unwrap();
        let empty = store.annotation_history(&a.auditor_id).unwrap();
        assert!(empty.annotations.is_empty() && empty.counts.is_empty());

        for (rev, label) in [(1, Label::Damaging), (2, Label::Damaging), (3, Label::Damaging), (4, Label::Skip), (5, Label::Skip)] {
            store.record_annotation(new(&a, rev, label, FocusBucket::UnexpectedRevert)).unwrap();
        }
        let h = store.annotation_history(&a.auditor_id).unwrap();
        assert_eq!(h.counts.len(), 1);
        assert_eq!(h.counts[&FocusBucket::UnexpectedRevert], LabelCounts { damaging: 3, not_damaging: 0, skip: 2 });
        let json = serde_json::to_value(&h.counts).unwrap();
        assert_eq!(json["UnexpectedRevert"]["damaging"], 3);
    }

    #[test]
    fn validation_errors() {
        let dir = tempfile::tempdir().unwrap();
        let catalog: Arc<dyn RevisionCatalog> = Arc::new(OnlyEven);
        let store = Store::open(dir.path(), catalog).unwrap().without_fsync();
        assert!(matches!(store.create_auditor(""), Err(StoreError::InvalidName)));
        assert!(matches!(store.create_auditor(&"x".repeat(65)), Err(StoreError::InvalidName)));
        let (a, _) = store.create_auditor(&"é".repeat(64)).unwrap();
        let (b, _) = store.create_auditor(&"é".repeat(64)).unwrap();
        assert_ne!(a.auditor_id, b.auditor_id);

        let ghost = Auditor { auditor_id: "ghost".into(), ..a.clone() };
        assert!(matches!(
            store.record_annotation(new(&ghost, 2, Label::Skip, FocusBucket::ExpectedRevert)),
            Err(StoreError::UnknownAuditor)
        ));
        assert!(matches!(
            store.record_annotation(new(&a, 3, Label::Skip, FocusBucket::ExpectedRevert)),
            Err(StoreError::UnknownRev(3))
        ));
        let mut long = new(&a, 2, Label::Skip, FocusBucket::ExpectedRevert);
        long.note = Some("n".repeat(1_001));
        assert!(matches!(store.record_annotation(long), Err(StoreError::NoteTooLong)));
        assert!(matches!(store.annotation_history("ghost"), Err(StoreError::UnknownAuditor)));
    }

    struct OnlyEven;
    impl RevisionCatalog for OnlyEven {
        fn contains_rev(&self, rev_id: u64) -> bool {
            rev_id.is_multiple_of(2)
        }
    }

    #[test]
    fn replay_reproduces_live_set() {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        let auditors: Vec<Auditor> = (0..3).map(|i| store.create_auditor(&format!("a{i}")).unwrap().0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let labels = [Label::Damaging, Label::NotDamaging, Label::Skip];
        for _ in 0..1_000 {
            let a = &auditors[rng.random_range(0..3)];
            let label = labels[rng.random_range(0..3)];
            store.record_annotation(new(a, rng.random_range(1..60), label, FocusBucket::ExpectedConsensus)).unwrap();
        }
        let live_before: Vec<Annotation> = store.read(|s| s.live().cloned().collect());
        drop(store);

        let reopened = open(dir.path());
        let live_after: Vec<Annotation> = reopened.read(|s| s.live().cloned().collect());
        assert_eq!(live_before, live_after);
        for a in &auditors {
            assert_eq!(reopened.annotation_history(&a.auditor_id).unwrap(), replay(dir.path()).unwrap().history(&a.auditor_id).unwrap());
        }
    }

    #[test]
    fn torn_tail_is_trimmed_and_appends_continue() {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        let (a, _) = store.create_auditor("a").unwrap();
        store.record_annotation(new(&a, 1, Label::Damaging, FocusBucket::UnexpectedRevert)).unwrap();
        drop(store);

        let log = dir.path().join(ANNOTATIONS_FILE);
        let mut f = OpenOptions::new().append(true).open(&log).unwrap();
        f.write_all(br#"{"annotation_id":2,"auditor_id":"#).unwrap();
        drop(f);

        // Read-only replay ignores the torn line without touching the file.
        assert_eq!(replay(dir.path()).unwrap().all().len(), 1);
        let reopened = open(dir.path());
        let rec = reopened.record_annotation(new(&a, 1, Label::Skip, FocusBucket::UnexpectedRevert)).unwrap();
        assert_eq!(rec.annotation.annotation_id, 2);
        assert_eq!(rec.superseded, Some(1));
        drop(reopened);
        assert_eq!(replay(dir.path()).unwrap().all().len(), 2);
    }

    #[test]
    fn corrupt_middle_line_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = open(dir.path());
        store.create_auditor("a").unwrap();
        drop(store);
        let mut f = OpenOptions::new().append(true).open(dir.path().join(ANNOTATIONS_FILE)).unwrap();
        f.write_all(b"garbage\n").unwrap();
        assert!(matches!(replay(dir.path()), Err(StoreError::Corrupt { line: 1, .. })));
    }
}
