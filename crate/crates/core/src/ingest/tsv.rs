use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::{IngestError, Prediction, RawEdit, MAX_NAMESPACE};

pub const EDIT_COLUMNS: [&str; 16] = [
    "rev_id",
    "parent_rev_id",
    "page_id",
    "page_namespace",
    "page_title",
    "page_categories",
    "page_size_before",
    "byte_delta",
    "is_minor",
    "timestamp",
    "editor_name",
    "editor_is_registered",
    "editor_is_bot",
    "editor_edit_count_at_time",
    "editor_account_age_at_time",
    "content_hash",
];

pub const PREDICTION_COLUMNS: [&str; 3] = ["rev_id", "damaging_prob", "model_version"];

const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

/// Why a data row was rejected.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, thiserror::Error,
)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    #[error("wrong number of fields")]
    FieldCount,
    #[error("field is not valid UTF-8")]
    BadUtf8,
    #[error("rev_id must be a positive integer")]
    BadRevId,
    #[error("malformed integer")]
    BadInteger,
    #[error("boolean field must be 0 or 1")]
    BadBool,
    #[error("timestamp is not ISO-8601 UTC (YYYY-MM-DDTHH:MM:SSZ)")]
    BadTimestamp,
    #[error("content hash is not 40 lowercase hex chars")]
    BadHash,
    #[error("namespace outside [0, 5999]")]
    BadNamespace,
    #[error("damaging probability outside [0, 1]")]
    BadProbability,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Fail on the first malformed row instead of dropping it.
    pub strict: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParseReport {
    pub rows: u64,
    pub accepted: u64,
    pub dropped: BTreeMap<DropReason, u64>,
}

impl ParseReport {
    pub fn total_dropped(&self) -> u64 {
        self.dropped.values().sum()
    }
}

pub fn parse_timestamp(s: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT).ok().map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(secs: i64) -> String {
    DateTime::from_timestamp(secs, 0)
        .map(|t| t.format(TIMESTAMP_FORMAT).to_string())
        .unwrap_or_else(|| secs.to_string())
}

fn tsv_reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(false)
        .from_reader(input)
}

fn tsv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .delimiter(b'\t')
        .quote_style(csv::QuoteStyle::Never)
        .has_headers(false)
        .from_writer(out)
}

/// Runs `parse_row` over every data row, handling the header, drop counting
/// and strict mode in one place.
fn parse_rows<R, T, F>(
    input: R,
    columns: &[&str],
    opts: ParseOptions,
    mut parse_row: F,
) -> Result<(Vec<T>, ParseReport), IngestError>
where
    R: Read,
    F: FnMut(&[&str]) -> Result<T, DropReason>,
{
    let mut reader = tsv_reader(input);
    let mut records = reader.byte_records();

    let header = match records.next() {
        Some(h) => h?,
        None => return Err(IngestError::Header("empty input".into())),
    };
    let names: Vec<&[u8]> = header.iter().collect();
    if names.len() != columns.len() || names.iter().zip(columns).any(|(a, b)| *a != b.as_bytes()) {
        return Err(IngestError::Header(format!(
            "expected columns {:?}, found {:?}",
            columns,
            names.iter().map(|n| String::from_utf8_lossy(n)).collect::<Vec<_>>()
        )));
    }

    let mut out = Vec::new();
    let mut report = ParseReport::default();
    for record in records {
        let record = record?;
        report.rows += 1;
        let line = record.position().map(|p| p.line()).unwrap_or(0);

        let parsed = if record.len() != columns.len() {
            Err(DropReason::FieldCount)
        } else {
            record
                .iter()
                .map(|f| std::str::from_utf8(f).map_err(|_| DropReason::BadUtf8))
                .collect::<Result<Vec<&str>, _>>()
                .and_then(|fields| parse_row(&fields))
        };

        match parsed {
            Ok(row) => {
                report.accepted += 1;
                out.push(row);
            }
            Err(reason) if opts.strict => return Err(IngestError::Row { line, reason }),
            Err(reason) => *report.dropped.entry(reason).or_default() += 1,
        }
    }
    Ok((out, report))
}

fn rev_id(s: &str) -> Result<u64, DropReason> {
    match s.parse::<u64>() {
        Ok(0) | Err(_) => Err(DropReason::BadRevId),
        Ok(v) => Ok(v),
    }
}

fn uint(s: &str) -> Result<u64, DropReason> {
    s.parse().map_err(|_| DropReason::BadInteger)
}

fn flag(s: &str) -> Result<bool, DropReason> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(DropReason::BadBool),
    }
}

fn edit_row(f: &[&str]) -> Result<RawEdit, DropReason> {
    let page_namespace = f[3]
        .parse::<u16>()
        .ok()
        .filter(|ns| *ns <= MAX_NAMESPACE)
        .ok_or(DropReason::BadNamespace)?;
    Ok(RawEdit {
        rev_id: rev_id(f[0])?,
        parent_rev_id: uint(f[1])?,
        page_id: uint(f[2]).and_then(|v| if v == 0 { Err(DropReason::BadInteger) } else { Ok(v) })?,
        page_namespace,
        page_title: f[4].to_owned(),
        page_categories: f[5].split('|').filter(|c| !c.is_empty()).map(str::to_owned).collect(),
        page_size_before: uint(f[6])?,
        byte_delta: f[7].parse().map_err(|_| DropReason::BadInteger)?,
        is_minor: flag(f[8])?,
        timestamp: parse_timestamp(f[9]).ok_or(DropReason::BadTimestamp)?,
        editor_name: f[10].to_owned(),
        editor_is_registered: flag(f[11])?,
        editor_is_bot: flag(f[12])?,
        editor_edit_count_at_time: uint(f[13])?,
        editor_account_age_at_time: uint(f[14])?,
        content_hash: f[15].parse()?,
    })
}

fn prediction_row(f: &[&str]) -> Result<Prediction, DropReason> {
    let damaging_prob: f64 = f[1].parse().map_err(|_| DropReason::BadProbability)?;
    if !(0.0..=1.0).contains(&damaging_prob) {
        return Err(DropReason::BadProbability);
    }
    Ok(Prediction { rev_id: rev_id(f[0])?, damaging_prob, model_version: f[2].to_owned() })
}

/// Parses the 16-column edits TSV. Rows come back in input order.
pub fn parse_edits<R: Read>(
    input: R,
    opts: ParseOptions,
) -> Result<(Vec<RawEdit>, ParseReport), IngestError> {
    parse_rows(input, &EDIT_COLUMNS, opts, edit_row)
}

pub fn parse_predictions<R: Read>(
    input: R,
    opts: ParseOptions,
) -> Result<(Vec<Prediction>, ParseReport), IngestError> {
    parse_rows(input, &PREDICTION_COLUMNS, opts, prediction_row)
}

fn check_field(s: &str) -> io::Result<&str> {
    if s.contains(['\t', '\n', '\r']) {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("field {s:?} contains a tab or line break"),
        ));
    }
    Ok(s)
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Writes edits in the canonical TSV form read by [`parse_edits`].
pub fn write_edits<'a, W, I>(out: W, edits: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a RawEdit>,
{
    let mut w = tsv_writer(out);
    w.write_record(EDIT_COLUMNS)?;
    for e in edits {
        if e.page_categories.iter().any(|c| c.is_empty() || c.contains('|')) {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!("rev {}: categories must be non-empty and free of '|'", e.rev_id),
            ));
        }
        let categories = e.page_categories.join("|");
        w.write_record([
            e.rev_id.to_string().as_str(),
            &e.parent_rev_id.to_string(),
            &e.page_id.to_string(),
            &e.page_namespace.to_string(),
            check_field(&e.page_title)?,
            check_field(&categories)?,
            &e.page_size_before.to_string(),
            &e.byte_delta.to_string(),
            bit(e.is_minor),
            &format_timestamp(e.timestamp),
            check_field(&e.editor_name)?,
            bit(e.editor_is_registered),
            bit(e.editor_is_bot),
            &e.editor_edit_count_at_time.to_string(),
            &e.editor_account_age_at_time.to_string(),
            &e.content_hash.to_string(),
        ])?;
    }
    w.flush()
}

pub fn write_predictions<'a, W, I>(out: W, predictions: I) -> io::Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a Prediction>,
{
    let mut w = tsv_writer(out);
    w.write_record(PREDICTION_COLUMNS)?;
    for p in predictions {
        w.write_record([
            p.rev_id.to_string().as_str(),
            &p.damaging_prob.to_string(),
            check_field(&p.model_version)?,
        ])?;
    }
    w.flush()
}
