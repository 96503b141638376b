//! The joined, immutable edit dataset and its on-disk form.
//!
//! File layout: 8-byte magic `EDAUDIT\0`, one format-version byte, then a
//! bincode body holding the [`DatasetHeader`] and the records ordered by
//! rev_id. Indexes are rebuilt on load.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::focus::{classify_focus, FocusBucket, FocusPolicy};
use crate::index::FilterIndex;
use crate::ingest::{ContentHash, JoinReport, Prediction, RawEdit, RevertStatus};

pub const MAGIC: [u8; 8] = *b"EDAUDIT\0";
pub const FORMAT_VERSION: u8 = 1;

/// One revision with its model score and revert outcome, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub rev_id: u64,
    pub parent_rev_id: u64,
    pub page_id: u64,
    pub page_namespace: u16,
    pub page_title: String,
    pub page_categories: Vec<String>,
    pub page_size_before: u64,
    pub byte_delta: i64,
    pub is_minor: bool,
    pub timestamp: i64,
    pub editor_name: String,
    pub editor_is_registered: bool,
    pub editor_is_bot: bool,
    pub editor_edit_count_at_time: u64,
    pub editor_account_age_at_time: u64,
    pub content_hash: ContentHash,
    pub damaging_prob: f64,
    pub model_version: String,
    pub reverted: bool,
    pub reverting_rev_id: Option<u64>,
    pub seconds_to_revert: Option<u64>,
    pub is_self_revert: bool,
    /// Too recent for a full revert window before the data ends.
    pub censored: bool,
}

impl EditRecord {
    pub fn new(edit: RawEdit, prediction: Prediction, status: RevertStatus) -> Self {
        debug_assert_eq!(edit.rev_id, prediction.rev_id);
        debug_assert_eq!(edit.rev_id, status.rev_id);
        EditRecord {
            rev_id: edit.rev_id,
            parent_rev_id: edit.parent_rev_id,
            page_id: edit.page_id,
            page_namespace: edit.page_namespace,
            page_title: edit.page_title,
            page_categories: edit.page_categories,
            page_size_before: edit.page_size_before,
            byte_delta: edit.byte_delta,
            is_minor: edit.is_minor,
            timestamp: edit.timestamp,
            editor_name: edit.editor_name,
            editor_is_registered: edit.editor_is_registered,
            editor_is_bot: edit.editor_is_bot,
            editor_edit_count_at_time: edit.editor_edit_count_at_time,
            editor_account_age_at_time: edit.editor_account_age_at_time,
            content_hash: edit.content_hash,
            damaging_prob: prediction.damaging_prob,
            model_version: prediction.model_version,
            reverted: status.reverted,
            reverting_rev_id: status.reverting_rev_id,
            seconds_to_revert: status.seconds_to_revert,
            is_self_revert: status.is_self_revert,
            censored: false,
        }
    }

    /// Revert outcome after applying the self-revert policy.
    pub fn counts_as_reverted(&self, policy: &FocusPolicy) -> bool {
        self.reverted && (policy.count_self_reverts || !self.is_self_revert)
    }

    /// The record's quadrant, or `None` when it is excluded from every
    /// bucket (a censored edit whose outcome would be "kept").
    pub fn bucket(&self, policy: &FocusPolicy) -> Option<FocusBucket> {
        let bucket = classify_focus(self.damaging_prob, self.counts_as_reverted(policy), policy.threshold);
        if bucket.is_consensus() && self.censored && policy.exclude_censored {
            None
        } else {
            Some(bucket)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub revert_window: u64,
    pub revert_radius: u64,
    /// Latest edit timestamp in the input; the censoring reference point.
    pub observed_until: i64,
    pub join: JoinReport,
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a dataset file (bad magic)")]
    BadMagic,
    #[error("unsupported dataset format version {0}")]
    Version(u8),
    #[error("corrupt dataset body: {0}")]
    Body(#[from] bincode::Error),
    #[error("records are not strictly ordered by rev_id at {0}")]
    Order(u64),
}

#[derive(Serialize, Deserialize)]
struct Body {
    header: DatasetHeader,
    records: Vec<EditRecord>,
}

/// Immutable after construction; share it behind an `Arc`.
#[derive(Debug)]
pub struct Dataset {
    header: DatasetHeader,
    records: Vec<EditRecord>,
    by_rev: HashMap<u64, usize>,
    index: FilterIndex,
}

impl Dataset {
    /// `records` must be sorted by rev_id with no duplicates.
    pub fn new(header: DatasetHeader, records: Vec<EditRecord>) -> Self {
        let by_rev = records.iter().enumerate().map(|(i, r)| (r.rev_id, i)).collect();
        let index = FilterIndex::build(&records);
        Dataset { header, records, by_rev, index }
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    pub fn records(&self) -> &[EditRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, rev_id: u64) -> Option<&EditRecord> {
        self.by_rev.get(&rev_id).map(|&i| &self.records[i])
    }

    pub fn contains(&self, rev_id: u64) -> bool {
        self.by_rev.contains_key(&rev_id)
    }

    pub fn index(&self) -> &FilterIndex {
        &self.index
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<(), DatasetError> {
        out.write_all(&MAGIC)?;
        out.write_all(&[FORMAT_VERSION])?;
        #[derive(Serialize)]
        struct BodyRef<'a> {
            header: &'a DatasetHeader,
            records: &'a [EditRecord],
        }
        bincode::serialize_into(&mut out, &BodyRef { header: &self.header, records: &self.records })?;
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self, DatasetError> {
        let mut magic = [0u8; 9];
        input.read_exact(&mut magic).map_err(|e| match e.kind() {
            io::ErrorKind::UnexpectedEof => DatasetError::BadMagic,
            _ => DatasetError::Io(e),
        })?;
        if magic[..8] != MAGIC {
            return Err(DatasetError::BadMagic);
        }
        if magic[8] != FORMAT_VERSION {
            return Err(DatasetError::Version(magic[8]));
        }
        let body: Body = bincode::deserialize_from(input)?;
        if let Some(w) = body.records.windows(2).find(|w| w[0].rev_id >= w[1].rev_id) {
            return Err(DatasetError::Order(w[1].rev_id));
        }
        Ok(Dataset::new(body.header, body.records))
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}
