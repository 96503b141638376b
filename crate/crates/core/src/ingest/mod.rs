//! Edit-history ingestion: TSV parsing, identity-revert detection and the
//! join of edits, model predictions and revert outcomes into a [`Dataset`].
//!
//! The pipeline is a single batch pass:
//!
//! 1. [`parse_edits`] and [`parse_predictions`] read the two input files,
//!    dropping (and counting) malformed rows unless strict mode is on.
//! 2. Edits are grouped by page, ordered by `(timestamp, rev_id)` and fed to
//!    [`detect_reverts`]. Pages are independent and processed in parallel.
//! 3. [`join_dataset`] keeps every edit that has a prediction, and
//!    [`build_dataset`] flags right-censored edits relative to the last
//!    observed timestamp.
//!
//! [`Dataset`]: crate::dataset::Dataset

mod join;
mod reverts;
mod tsv;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, DatasetHeader, EditRecord};

pub use join::{join_dataset, JoinReport};
pub use reverts::detect_reverts;
pub use tsv::{
    format_timestamp, parse_edits, parse_predictions, parse_timestamp, write_edits,
    write_predictions, DropReason, ParseOptions, ParseReport, EDIT_COLUMNS, PREDICTION_COLUMNS,
};

/// One year, the default revert-observation window.
pub const DEFAULT_REVERT_WINDOW: u64 = 31_536_000;
/// How many revisions back an identity revert may reach.
pub const DEFAULT_REVERT_RADIUS: usize = 15;
/// Highest namespace id accepted by the parser.
pub const MAX_NAMESPACE: u16 = 5999;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed header: {0}")]
    Header(String),
    #[error("line {line}: {reason}")]
    Row { line: u64, reason: DropReason },
    #[error("page {page_id}: edits not sorted by (timestamp, rev_id) at rev {rev_id}")]
    Unsorted { page_id: u64, rev_id: u64 },
    #[error("page history mixes page ids {0} and {1}")]
    MixedPages(u64, u64),
    #[error("duplicate rev_id {rev_id} in {input}")]
    DuplicateRevId { rev_id: u64, input: &'static str },
    #[error("no revert status for rev_id {0}")]
    MissingStatus(u64),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// SHA-1 digest of a revision's text, as 20 raw bytes.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentHash(pub [u8; 20]);

impl ContentHash {
    pub fn of_text(text: &str) -> Self {
        use sha1::{Digest, Sha1};
        ContentHash(Sha1::digest(text.as_bytes()).into())
    }
}

impl fmt::Display for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for ContentHash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentHash({self})")
    }
}

impl FromStr for ContentHash {
    type Err = DropReason;

    /// Only the canonical lowercase 40-hex form is accepted.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 40 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(DropReason::BadHash);
        }
        let mut out = [0u8; 20];
        hex::decode_to_slice(s, &mut out).map_err(|_| DropReason::BadHash)?;
        Ok(ContentHash(out))
    }
}

impl Serialize for ContentHash {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ContentHash {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|_| serde::de::Error::custom("expected 40 lowercase hex chars"))
    }
}

/// One revision as read from the edits file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawEdit {
    pub rev_id: u64,
    /// 0 for a page creation.
    pub parent_rev_id: u64,
    pub page_id: u64,
    pub page_namespace: u16,
    pub page_title: String,
    pub page_categories: Vec<String>,
    pub page_size_before: u64,
    pub byte_delta: i64,
    pub is_minor: bool,
    /// UTC seconds since the epoch.
    pub timestamp: i64,
    pub editor_name: String,
    pub editor_is_registered: bool,
    pub editor_is_bot: bool,
    pub editor_edit_count_at_time: u64,
    pub editor_account_age_at_time: u64,
    pub content_hash: ContentHash,
}

/// A model score for one revision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub rev_id: u64,
    pub damaging_prob: f64,
    pub model_version: String,
}

/// Revert outcome of one revision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RevertStatus {
    pub rev_id: u64,
    pub reverted: bool,
    pub reverting_rev_id: Option<u64>,
    pub seconds_to_revert: Option<u64>,
    pub is_self_revert: bool,
}

impl RevertStatus {
    pub fn not_reverted(rev_id: u64) -> Self {
        RevertStatus {
            rev_id,
            reverted: false,
            reverting_rev_id: None,
            seconds_to_revert: None,
            is_self_revert: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub window: u64,
    pub radius: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions { window: DEFAULT_REVERT_WINDOW, radius: DEFAULT_REVERT_RADIUS }
    }
}

/// Everything the ingest step reports besides the dataset itself.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub join: JoinReport,
    pub pages: u64,
    pub reverted: u64,
    pub self_reverts: u64,
    pub censored: u64,
}

/// Groups edits by page and orders each page by `(timestamp, rev_id)`.
pub fn group_pages(edits: Vec<RawEdit>) -> Vec<Vec<RawEdit>> {
    let mut pages: BTreeMap<u64, Vec<RawEdit>> = BTreeMap::new();
    for edit in edits {
        pages.entry(edit.page_id).or_default().push(edit);
    }
    pages
        .into_values()
        .map(|mut page| {
            page.sort_by_key(|e| (e.timestamp, e.rev_id));
            page
        })
        .collect()
}

/// Runs revert detection over every page, then joins and censors.
pub fn build_dataset(
    edits: Vec<RawEdit>,
    predictions: Vec<Prediction>,
    opts: IngestOptions,
) -> Result<(Dataset, IngestReport), IngestError> {
    let observed_until = edits.iter().map(|e| e.timestamp).max().unwrap_or(0);
    let pages = group_pages(edits);
    let page_count = pages.len() as u64;

    let statuses: Vec<Vec<RevertStatus>> = pages
        .par_iter()
        .map(|page| detect_reverts(page, opts.window, opts.radius))
        .collect::<Result<_, _>>()?;

    let edits: Vec<RawEdit> = pages.into_iter().flatten().collect();
    let statuses: Vec<RevertStatus> = statuses.into_iter().flatten().collect();
    let (mut records, join) = join_dataset(edits, predictions, statuses)?;

    let mut report = IngestReport { join, pages: page_count, ..Default::default() };
    for record in &mut records {
        record.censored = is_censored(record.timestamp, observed_until, opts.window);
        report.reverted += record.reverted as u64;
        report.self_reverts += (record.reverted && record.is_self_revert) as u64;
        report.censored += record.censored as u64;
    }

    let header = DatasetHeader {
        revert_window: opts.window,
        revert_radius: opts.radius as u64,
        observed_until,
        join: report.join.clone(),
    };
    Ok((Dataset::new(header, records), report))
}

/// An edit is censored when the data ends before its full revert window has
/// elapsed, so "not reverted" cannot yet be judged.
pub fn is_censored(timestamp: i64, observed_until: i64, window: u64) -> bool {
    (observed_until - timestamp) < window as i64
}

impl From<&EditRecord> for RawEdit {
    fn from(r: &EditRecord) -> Self {
        RawEdit {
            rev_id: r.rev_id,
            parent_rev_id: r.parent_rev_id,
            page_id: r.page_id,
            page_namespace: r.page_namespace,
            page_title: r.page_title.clone(),
            page_categories: r.page_categories.clone(),
            page_size_before: r.page_size_before,
            byte_delta: r.byte_delta,
            is_minor: r.is_minor,
            timestamp: r.timestamp,
            editor_name: r.editor_name.clone(),
            editor_is_registered: r.editor_is_registered,
            editor_is_bot: r.editor_is_bot,
            editor_edit_count_at_time: r.editor_edit_count_at_time,
            editor_account_age_at_time: r.editor_account_age_at_time,
            content_hash: r.content_hash,
        }
    }
}
