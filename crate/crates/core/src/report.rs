//! Summaries and comparisons computed from a dataset plus the annotation
//! log. Both the HTTP service and the `report` command go through here, so
//! their numbers cannot drift apart.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::filter::{FilterError, FilterSpec};
use crate::focus::{FocusBucket, FocusPolicy};
use crate::stats::{compare, summarize, AuditSummary, GroupComparison, StatsError, TestMethod};
use crate::store::{Label, Snapshot};

/// Whose labels feed a summary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelScope {
    /// One auditor's live labels.
    Auditor(String),
    /// One label per revision: the most recent live label by any auditor.
    LatestPerRevision,
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("group {0} has no labeled edits")]
    InsufficientData(&'static str),
}

/// Labels on edits that the filter admits and that currently sit in `bucket`.
pub fn slice_labels(
    dataset: &Dataset,
    snapshot: &Snapshot,
    filter: &FilterSpec,
    bucket: FocusBucket,
    policy: &FocusPolicy,
    scope: &LabelScope,
) -> Vec<Label> {
    let in_slice = |rev_id: u64| {
        dataset
            .get(rev_id)
            .is_some_and(|r| filter.matches(r) && r.bucket(policy) == Some(bucket))
    };
    match scope {
        LabelScope::Auditor(id) => snapshot
            .live()
            .filter(|a| &a.auditor_id == id && in_slice(a.rev_id))
            .map(|a| a.label)
            .collect(),
        LabelScope::LatestPerRevision => {
            let mut latest: HashMap<u64, (u64, Label)> = HashMap::new();
            for a in snapshot.live() {
                let slot = latest.entry(a.rev_id).or_insert((a.annotation_id, a.label));
                if a.annotation_id > slot.0 {
                    *slot = (a.annotation_id, a.label);
                }
            }
            let mut revs: Vec<_> = latest.into_iter().filter(|(rev, _)| in_slice(*rev)).collect();
            revs.sort_by_key(|(rev, _)| *rev);
            revs.into_iter().map(|(_, (_, label))| label).collect()
        }
    }
}

pub fn summary(
    dataset: &Dataset,
    snapshot: &Snapshot,
    filter: &FilterSpec,
    bucket: FocusBucket,
    policy: &FocusPolicy,
    alpha: f64,
    scope: &LabelScope,
) -> Result<AuditSummary, ReportError> {
    filter.validate()?;
    let labels = slice_labels(dataset, snapshot, filter, bucket, policy, scope);
    Ok(summarize(filter, bucket, labels, alpha)?)
}

#[allow(clippy::too_many_arguments)]
pub fn comparison(
    dataset: &Dataset,
    snapshot: &Snapshot,
    filter_a: &FilterSpec,
    filter_b: &FilterSpec,
    bucket: FocusBucket,
    policy: &FocusPolicy,
    alpha: f64,
    scope: &LabelScope,
) -> Result<GroupComparison, ReportError> {
    let a = summary(dataset, snapshot, filter_a, bucket, policy, alpha, scope)?;
    let b = summary(dataset, snapshot, filter_b, bucket, policy, alpha, scope)?;
    if a.n_labeled == 0 {
        return Err(ReportError::InsufficientData("a"));
    }
    if b.n_labeled == 0 {
        return Err(ReportError::InsufficientData("b"));
    }
    Ok(compare(&a, &b)?)
}

fn pct(x: f64) -> String {
    format!("{:.1}%", x * 100.0)
}

pub fn render_summary(s: &AuditSummary) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Bucket:          {}", s.bucket);
    let _ = writeln!(out, "Filter:          {} (fingerprint {})", s.filter.canonical_json(), s.filter_fingerprint);
    let _ = writeln!(out, "Labeled:         {} ({} skipped, not counted)", s.n_labeled, s.n_skipped);
    match (s.rate, s.ci_low, s.ci_high) {
        (Some(rate), Some(lo), Some(hi)) => {
            let _ = writeln!(out, "{:?}s:  {} of {}", s.error_kind, s.n_model_error, s.n_labeled);
            let _ = writeln!(
                out,
                "Rate:            {} ({}% Wilson CI {} to {})",
                pct(rate),
                (1.0 - s.alpha) * 100.0,
                pct(lo),
                pct(hi)
            );
        }
        _ => {
            let _ = writeln!(out, "Rate:            undefined (no labeled edits)");
        }
    }
    out
}

pub fn render_comparison(c: &GroupComparison) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Group A");
    out.push_str(&render_summary(&c.a));
    let _ = writeln!(out, "\nGroup B");
    out.push_str(&render_summary(&c.b));
    let method = match c.method {
        TestMethod::TwoProportionZ => "two-proportion z-test",
        TestMethod::FisherExact => "Fisher exact test",
    };
    let _ = writeln!(
        out,
        "\nDifference (A - B): {:+.1} points ({}% CI {:+.1} to {:+.1})",
        c.rate_diff * 100.0,
        (1.0 - c.a.alpha) * 100.0,
        c.diff_ci_low * 100.0,
        c.diff_ci_high * 100.0
    );
    let _ = writeln!(out, "p-value:            {:.6} ({method})", c.p_value);
    out
}
