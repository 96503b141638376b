use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{IngestError, Prediction, RawEdit, RevertStatus};
use crate::dataset::EditRecord;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReport {
    pub edits: u64,
    pub predictions: u64,
    pub records: u64,
    /// Edits dropped because no prediction exists for them.
    pub edits_unmatched: u64,
    /// Predictions whose rev_id is absent from the edits.
    pub predictions_unmatched: u64,
}

/// Inner join of edits and predictions on rev_id, carrying each edit's
/// revert status along. Records come back ordered by rev_id.
pub fn join_dataset(
    edits: Vec<RawEdit>,
    predictions: Vec<Prediction>,
    statuses: Vec<RevertStatus>,
) -> Result<(Vec<EditRecord>, JoinReport), IngestError> {
    let mut report = JoinReport {
        edits: edits.len() as u64,
        predictions: predictions.len() as u64,
        ..Default::default()
    };

    let mut by_rev: HashMap<u64, Prediction> = HashMap::with_capacity(predictions.len());
    for p in predictions {
        let rev_id = p.rev_id;
        if by_rev.insert(rev_id, p).is_some() {
            return Err(IngestError::DuplicateRevId { rev_id, input: "predictions" });
        }
    }
    let mut status_by_rev: HashMap<u64, RevertStatus> = HashMap::with_capacity(statuses.len());
    for s in statuses {
        if status_by_rev.insert(s.rev_id, s).is_some() {
            return Err(IngestError::DuplicateRevId { rev_id: s.rev_id, input: "revert statuses" });
        }
    }

    let mut seen = std::collections::HashSet::with_capacity(edits.len());
    let mut records = Vec::with_capacity(edits.len().min(by_rev.len()));
    for edit in edits {
        if !seen.insert(edit.rev_id) {
            return Err(IngestError::DuplicateRevId { rev_id: edit.rev_id, input: "edits" });
        }
        let status = *status_by_rev
            .get(&edit.rev_id)
            .ok_or(IngestError::MissingStatus(edit.rev_id))?;
        match by_rev.remove(&edit.rev_id) {
            Some(prediction) => records.push(EditRecord::new(edit, prediction, status)),
            None => report.edits_unmatched += 1,
        }
    }
    report.predictions_unmatched = by_rev.len() as u64;
    report.records = records.len() as u64;
    records.sort_by_key(|r| r.rev_id);
    Ok((records, report))
}
