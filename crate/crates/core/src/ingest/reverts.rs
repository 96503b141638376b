use std::collections::HashMap;

use super::{ContentHash, IngestError, RawEdit, RevertStatus};

/// Identity-revert detection over one page history.
///
/// An edit R reverts when its content hash equals that of the nearest earlier
/// revision O carrying the same hash, and O lies at most `radius` revisions
/// before R. Every edit strictly between O and R that is not yet marked is
/// marked as reverted by R, provided R is strictly later than it and no more
/// than `window` seconds after it.
///
/// `page_edits` must share one page id and be sorted by `(timestamp, rev_id)`;
/// the output is aligned with the input.
pub fn detect_reverts(
    page_edits: &[RawEdit],
    window: u64,
    radius: usize,
) -> Result<Vec<RevertStatus>, IngestError> {
    check_history(page_edits)?;

    let mut statuses: Vec<RevertStatus> =
        page_edits.iter().map(|e| RevertStatus::not_reverted(e.rev_id)).collect();
    let mut last_seen: HashMap<ContentHash, usize> = HashMap::new();

    for (r, reverting) in page_edits.iter().enumerate() {
        if let Some(&o) = last_seen.get(&reverting.content_hash) {
            if r - o <= radius {
                for k in o + 1..r {
                    if statuses[k].reverted {
                        continue;
                    }
                    let elapsed = reverting.timestamp - page_edits[k].timestamp;
                    if elapsed > 0 && elapsed as u64 <= window {
                        statuses[k] = RevertStatus {
                            rev_id: page_edits[k].rev_id,
                            reverted: true,
                            reverting_rev_id: Some(reverting.rev_id),
                            seconds_to_revert: Some(elapsed as u64),
                            is_self_revert: page_edits[k].editor_name == reverting.editor_name,
                        };
                    }
                }
            }
        }
        last_seen.insert(reverting.content_hash, r);
    }
    Ok(statuses)
}

fn check_history(page_edits: &[RawEdit]) -> Result<(), IngestError> {
    for pair in page_edits.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.page_id != b.page_id {
            return Err(IngestError::MixedPages(a.page_id, b.page_id));
        }
        if (a.timestamp, a.rev_id) >= (b.timestamp, b.rev_id) {
            return Err(IngestError::Unsorted { page_id: b.page_id, rev_id: b.rev_id });
        }
    }
    Ok(())
}
